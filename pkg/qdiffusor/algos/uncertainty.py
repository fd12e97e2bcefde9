"""
Repeat-inference uncertainty and the evaluation statistics: ROI tables, masked error metrics and
the rank correlation between predicted spread and actual error.
"""

import logging
from typing import Callable, Sequence

import numpy as np
from joblib import Parallel, delayed
from scipy.stats import spearmanr

from qdiffusor.algos.ddpm_sampler import sample
from qdiffusor.algos.ddpm_schedule import NoiseSchedule
from qdiffusor.model import (
    CHANNELS,
    ChannelMetrics,
    QuantMap,
    RankCorrelation,
    RoiReport,
    RoiRow,
    RoiSpec,
    UncertaintyResult,
    WeightedSeries,
)
from qdiffusor.nn import DenoiserNet
from qdiffusor.utils.errors import DomainError, ShapeMismatchError
from qdiffusor.utils.rng import derive_seed

log = logging.getLogger("qdiffusor.eval")

DEFAULT_REPEATS = 10


def summarise_repeats(samples: Sequence[QuantMap], seeds: Sequence[int]) -> UncertaintyResult:
    """
    Voxel-wise mean and sample standard deviation (K - 1 denominator) over repeated estimates.
    Voxels where every repeat agrees get exactly that value and zero spread.
    """
    if not samples:
        raise DomainError("need at least one repeat")
    stack = np.stack([s.channels() for s in samples]).astype(np.float64)
    identical = np.all(stack == stack[0], axis=0)
    mean = np.where(identical, stack[0], stack.mean(axis=0))
    std = None
    if len(samples) >= 2:
        std = np.where(identical, 0.0, stack.std(axis=0, ddof=1))
    mask = np.any(np.stack([s.mask for s in samples]), axis=0)
    return UncertaintyResult(QuantMap.from_channels(mean, mask), std, len(samples), list(seeds), list(samples))


def repeat_estimates(estimate: Callable[[int], QuantMap], k: int, base_seed: int, n_jobs: int = 1) -> UncertaintyResult:
    if k < 1:
        raise DomainError(f"repeat count must be >= 1, got {k}")
    seeds = [derive_seed(base_seed, i) for i in range(k)]
    samples = Parallel(n_jobs=n_jobs, prefer="threads")(delayed(estimate)(seed) for seed in seeds)
    return summarise_repeats(samples, seeds)


def repeat_sample(
    y: WeightedSeries,
    net: DenoiserNet,
    sched: NoiseSchedule,
    k: int = DEFAULT_REPEATS,
    base_seed: int = 0,
    n_jobs: int = 1,
    mask: np.ndarray | None = None,
) -> UncertaintyResult:
    """K independent reverse chains, one derived seed each, run on a frozen network."""
    result = repeat_estimates(lambda seed: sample(y, net, sched, seed, mask), k, base_seed, n_jobs)
    log.debug(f"Collected {k} samples for a {y.shape} series.")
    return result


def roi_stats(qmap: QuantMap, rois: RoiSpec, method: str = "estimate") -> RoiReport:
    """Per-region mean/std of t1 (reported in ms) and pd."""
    if not rois.regions:
        return RoiReport([])
    if rois.shape != qmap.shape:
        raise ShapeMismatchError(f"ROI grid {rois.shape} does not match map {qmap.shape}")
    rows = []
    for label, region in rois.regions.items():
        truth = rois.truth[label]
        t1 = qmap.t1_map[region].astype(np.float64) * 1000.0
        pd = qmap.pd_map[region].astype(np.float64)
        ddof = 1 if t1.size > 1 else 0
        gt_ms = truth.t1 * 1000.0
        mean = float(t1.mean())
        rows.append(
            RoiRow(
                region=label,
                gt_t1_ms=gt_ms,
                gt_std_ms=float(rois.gt_std.get(label, 0.0)) * 1000.0,
                method=method,
                est_mean_ms=mean,
                est_std_ms=float(t1.std(ddof=ddof)),
                rel_bias=(mean - gt_ms) / gt_ms if gt_ms > 0 else float("nan"),
                est_pd_mean=float(pd.mean()),
                est_pd_std=float(pd.std(ddof=ddof)),
                voxels=int(t1.size),
            )
        )
    return RoiReport(rows)


def error_metrics(estimate: QuantMap, truth: QuantMap, mask: np.ndarray) -> dict[str, ChannelMetrics]:
    """Masked RMSE, mean absolute relative error and bias (estimate - truth) per channel."""
    mask = np.asarray(mask, dtype=bool)
    if estimate.shape != truth.shape or mask.shape != truth.shape:
        raise ShapeMismatchError(f"estimate {estimate.shape}, truth {truth.shape} and mask {mask.shape} differ")
    if not mask.any():
        raise DomainError("error metrics need a non-empty mask")
    metrics = {}
    for name, est, ref in zip(CHANNELS, estimate.channels(), truth.channels()):
        est = est[mask].astype(np.float64)
        ref = ref[mask].astype(np.float64)
        diff = est - ref
        nonzero = ref != 0
        mare = float(np.mean(np.abs(diff[nonzero]) / np.abs(ref[nonzero]))) if nonzero.any() else float("nan")
        metrics[name] = ChannelMetrics(rmse=float(np.sqrt(np.mean(diff * diff))), mare=mare, bias=float(diff.mean()))
    return metrics


def uncertainty_error_correlation(std_map: np.ndarray, error_map: np.ndarray, mask: np.ndarray) -> RankCorrelation:
    """Spearman correlation of per-voxel spread against per-voxel absolute error inside mask."""
    std_map = np.asarray(std_map)
    error_map = np.asarray(error_map)
    mask = np.asarray(mask, dtype=bool)
    if std_map.shape != error_map.shape or mask.shape != std_map.shape:
        raise ShapeMismatchError(f"std {std_map.shape}, error {error_map.shape} and mask {mask.shape} differ")
    if not mask.any():
        raise DomainError("correlation needs a non-empty mask")
    spread = std_map[mask].astype(np.float64)
    error = np.abs(error_map[mask].astype(np.float64))
    if spread.size < 2 or np.all(spread == spread[0]) or np.all(error == error[0]):
        return RankCorrelation(float("nan"), False, int(spread.size))
    rho = spearmanr(spread, error).statistic
    return RankCorrelation(float(rho), bool(np.isfinite(rho)), int(spread.size))
