from dataclasses import dataclass

import numpy as np

from qdiffusor.utils.errors import DomainError, ShapeMismatchError

REFERENCE_STEPS = 1000
BETA_START = 1e-4
BETA_END = 0.02
MAX_BETA = 0.999


@dataclass(frozen=True)
class NoiseSchedule:
    """
    Per-step coefficients, stored 0-based: index t - 1 holds step t (1 <= t <= T).
    posterior_sigma uses sigma_t^2 = beta_t, with no noise on the final (t = 1) step.
    """

    beta: np.ndarray
    alpha: np.ndarray
    alpha_bar: np.ndarray
    posterior_sigma: np.ndarray

    @property
    def T(self) -> int:
        return int(self.beta.size)

    def check_step(self, t: int | np.ndarray):
        t = np.asarray(t)
        if np.any(t < 1) or np.any(t > self.T):
            raise DomainError(f"diffusion step must lie in [1, {self.T}], got {t}")

    def at(self, values: np.ndarray, t) -> np.ndarray:
        self.check_step(t)
        return values[np.asarray(t) - 1]


def make_schedule(T: int) -> NoiseSchedule:
    """
    Linear beta schedule. At T = 1000 the endpoints are 1e-4 and 0.02; other T rescale both by
    1000 / T (capped below 1) so alpha_bar_T stays close to zero.
    """
    if T < 2:
        raise DomainError(f"noise schedule needs T >= 2, got {T}")
    scale = REFERENCE_STEPS / T
    beta = np.linspace(BETA_START * scale, min(BETA_END * scale, MAX_BETA), T, dtype=np.float64)
    alpha = 1.0 - beta
    alpha_bar = np.cumprod(alpha)
    sigma = np.sqrt(beta)
    sigma[0] = 0.0
    return NoiseSchedule(beta=beta, alpha=alpha, alpha_bar=alpha_bar, posterior_sigma=sigma)


def q_sample(x0: np.ndarray, t, eps: np.ndarray, sched: NoiseSchedule) -> np.ndarray:
    """Forward corruption sqrt(ab_t) * x0 + sqrt(1 - ab_t) * eps; t is a scalar or one step per sample."""
    x0 = np.asarray(x0, dtype=np.float64)
    eps = np.asarray(eps, dtype=np.float64)
    if x0.shape != eps.shape:
        raise ShapeMismatchError(f"x0 {x0.shape} and eps {eps.shape} differ")
    ab = np.asarray(sched.at(sched.alpha_bar, t), dtype=np.float64)
    ab = ab.reshape(ab.shape + (1,) * (x0.ndim - ab.ndim))
    return np.sqrt(ab) * x0 + np.sqrt(1.0 - ab) * eps
