"""
Inversion-recovery fast spin echo magnitude model

    S(TI) = | PD * (1 - B * exp(-TI / T1)) |

with analytic derivatives and magnitude-noise injection. Times are seconds throughout.
"""

import numpy as np

from qdiffusor.model import NoiseKind, NoiseSpec, Protocol, QuantMap, TissueParams, WeightedSeries
from qdiffusor.utils.errors import DomainError, NullPointError

SMOOTHING_EPS = 1e-6


def _check_ti(ti: float):
    if not ti > 0:
        raise DomainError(f"inversion time must be > 0 seconds, got {ti}")


def _inner(t1, b, ti):
    return 1.0 - b * np.exp(-ti / t1)


def signal(params: TissueParams, ti: float) -> float:
    params.validate()
    _check_ti(ti)
    return float(abs(params.pd * _inner(params.t1, params.b, ti)))


def signal_series(params: TissueParams, protocol: Protocol) -> np.ndarray:
    params.validate()
    tis = np.asarray(protocol.tis)
    return np.abs(params.pd * _inner(params.t1, params.b, tis))


def null_point(params: TissueParams) -> float | None:
    """TI at which the signal crosses zero, or None when b <= 1 (no crossing)."""
    params.validate()
    if params.b <= 1:
        return None
    return float(params.t1 * np.log(params.b))


def signal_jacobian(params: TissueParams, ti: float, smoothed: bool = False, eps: float = SMOOTHING_EPS) -> np.ndarray:
    """
    Gradient (dS/dt1, dS/dpd, dS/db).

    Exact mode carries sign(inner) through the absolute value and raises NullPointError when
    the inner expression vanishes. Smoothed mode differentiates sqrt(inner^2 + eps^2) instead.
    """
    params.validate()
    _check_ti(ti)
    decay = np.exp(-ti / params.t1)
    inner = 1.0 - params.b * decay
    if smoothed:
        magnitude = np.sqrt(inner * inner + eps * eps)
        sign = inner / magnitude
    else:
        if abs(inner) < eps:
            raise NullPointError(f"signal is at its null point (ti={ti}, t1={params.t1}, b={params.b})")
        magnitude = abs(inner)
        sign = np.sign(inner)
    d_t1 = params.pd * sign * (-params.b * decay * ti / params.t1**2)
    d_pd = magnitude
    d_b = params.pd * sign * (-decay)
    return np.array([d_t1, d_pd, d_b], dtype=np.float64)


def ir_signal(t1: np.ndarray, pd: np.ndarray, b: np.ndarray, tis) -> np.ndarray:
    """
    Vectorised model over parameter grids. Returns shape (len(tis), *t1.shape).
    Voxels with t1 == 0 (background convention) give 0.
    """
    t1, pd, b = np.broadcast_arrays(*(np.asarray(v, dtype=np.float64) for v in (t1, pd, b)))
    tis = np.asarray(tis, dtype=np.float64).reshape((-1,) + (1,) * t1.ndim)
    safe_t1 = np.where(t1 > 0, t1, 1.0)
    decay = np.where(t1 > 0, np.exp(-tis / safe_t1), 0.0)
    out = np.abs(pd * (1.0 - b * decay))
    return np.where(t1 > 0, out, 0.0)


def ir_jacobian(theta: np.ndarray, tis, eps: float = SMOOTHING_EPS) -> tuple[np.ndarray, np.ndarray]:
    """
    Smoothed model values and Jacobian for one parameter vector theta = (t1, pd, b).
    Returns (model (N,), jacobian (N, 3)). The model values are the exact magnitudes.
    """
    t1, pd, b = theta
    tis = np.asarray(tis, dtype=np.float64)
    decay = np.exp(-tis / t1)
    inner = 1.0 - b * decay
    smooth = np.sqrt(inner * inner + eps * eps)
    sign = inner / smooth
    jac = np.empty((tis.size, 3))
    jac[:, 0] = pd * sign * (-b * decay * tis / t1**2)
    jac[:, 1] = smooth
    jac[:, 2] = pd * sign * (-decay)
    return np.abs(pd * inner), jac


def synthesize(qmap: QuantMap, protocol: Protocol) -> WeightedSeries:
    """Noiseless weighted series for every voxel of a map."""
    images = ir_signal(qmap.t1_map, qmap.pd_map, qmap.b_map, protocol.tis)
    return WeightedSeries(images, protocol)


def add_noise(series: np.ndarray, spec: NoiseSpec) -> np.ndarray:
    """
    Magnitude noise. gaussian_magnitude adds N(0, sigma^2) and clamps at 0; rician takes the
    modulus of a complex Gaussian perturbation. Deterministic for a given spec.seed.
    """
    series = np.asarray(series, dtype=np.float64)
    if spec.sigma == 0:
        return series.copy()
    rng = np.random.default_rng(spec.seed)
    if spec.kind == NoiseKind.GAUSSIAN_MAGNITUDE:
        return np.maximum(series + rng.normal(0.0, spec.sigma, series.shape), 0.0)
    real = series + rng.normal(0.0, spec.sigma, series.shape)
    imag = rng.normal(0.0, spec.sigma, series.shape)
    return np.hypot(real, imag)
