import logging

import numpy as np

from qdiffusor.algos.ddpm_schedule import NoiseSchedule
from qdiffusor.algos.map_scaling import MapScaler, condition_mask, normalise_condition
from qdiffusor.model import QuantMap, WeightedSeries
from qdiffusor.nn import DenoiserNet, no_grad
from qdiffusor.utils.errors import ShapeMismatchError

log = logging.getLogger("qdiffusor.ddpm.sample")


def reverse_step(
    x_t: np.ndarray, eps_hat: np.ndarray, t: int, sched: NoiseSchedule, noise: np.ndarray | None = None
) -> np.ndarray:
    """
    Ancestral step x_t -> x_{t-1}:
    (x_t - beta_t / sqrt(1 - ab_t) * eps_hat) / sqrt(alpha_t) + sigma_t * z.
    """
    beta = sched.at(sched.beta, t)
    alpha = sched.at(sched.alpha, t)
    alpha_bar = sched.at(sched.alpha_bar, t)
    sigma = sched.at(sched.posterior_sigma, t)
    mean = (x_t - beta / np.sqrt(1.0 - alpha_bar) * eps_hat) / np.sqrt(alpha)
    if noise is None or sigma == 0:
        return mean
    return mean + sigma * noise


def sample_scaled(cond: np.ndarray, net: DenoiserNet, sched: NoiseSchedule, rng: np.random.Generator) -> np.ndarray:
    """Run the reverse chain from x_T ~ N(0, I) for a (B, N, H, W) normalised condition."""
    shape = (cond.shape[0], net.cfg.out_channels) + cond.shape[2:]
    x = rng.standard_normal(shape)
    with no_grad():
        for t in range(sched.T, 0, -1):
            steps = np.full(shape[0], t)
            eps_hat = net(x, cond, steps).numpy().astype(np.float64)
            noise = rng.standard_normal(shape) if t > 1 else None
            x = reverse_step(x, eps_hat, t, sched, noise)
    return x


def sample(
    y: WeightedSeries, net: DenoiserNet, sched: NoiseSchedule, seed, mask: np.ndarray | None = None
) -> QuantMap:
    """
    One posterior sample of the quantitative maps given a weighted series. The foreground mask
    defaults to the voxels where the condition carries signal.
    """
    if len(y.protocol) != net.cfg.condition_channels:
        raise ShapeMismatchError(
            f"network expects {net.cfg.condition_channels} weighted images, series has {len(y.protocol)}"
        )
    cond, _ = normalise_condition(y.images)
    scaled = sample_scaled(cond[None], net, sched, np.random.default_rng(seed))[0]
    channels = MapScaler(net.pd_ref).inverse(scaled)
    mask = condition_mask(y.images) if mask is None else np.asarray(mask, dtype=bool)
    log.debug(f"Sampled {y.shape} map over {sched.T} steps (seed {seed}).")
    return QuantMap.from_channels(channels, mask)
