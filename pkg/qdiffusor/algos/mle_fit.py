import logging
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from joblib import Parallel, delayed

from qdiffusor.algos.signal_model import ir_jacobian, signal_jacobian
from qdiffusor.model import FitOptions, FitResult, Protocol, QuantMap, TissueParams, WeightedSeries
from qdiffusor.utils.errors import DomainError, ShapeMismatchError

log = logging.getLogger("qdiffusor.mle")

_LAMBDA_START = 1e-3
_LAMBDA_MAX = 1e12
_RESIDUAL_FLOOR = 1e-28
# residual norms up to this many noise sigmas per sample count as a fit of the data
_NOISE_BAND = 3.0
_POLARITY_STARTS = 3


@dataclass
class FitMapMeta:
    converged: np.ndarray
    degenerate: np.ndarray
    iterations: np.ndarray
    residual_norm: np.ndarray


@dataclass
class Descent:
    """Final iterate of one damped Gauss-Newton run and the cost after every accepted step."""

    theta: np.ndarray
    cost: float
    iterations: int
    stationary: bool
    history: list[float] = field(default_factory=list)


def grid_initialise(series: np.ndarray, tis: np.ndarray, opts: FitOptions) -> tuple[np.ndarray, float]:
    """
    Best (t1, pd, b) over the t1 x b grid, pd solved in closed form for each candidate.
    Ties go to the smallest t1 (row-major argmin over an ascending t1 axis).
    """
    t1 = np.asarray(opts.t1_grid)[:, None, None]
    b = np.asarray(opts.b_grid)[None, :, None]
    basis = np.abs(1.0 - b * np.exp(-tis[None, None, :] / t1))
    energy = np.sum(basis * basis, axis=-1)
    pd = np.divide(np.sum(basis * series, axis=-1), energy, out=np.zeros_like(energy), where=energy > 0)
    pd = np.clip(pd, *opts.bounds.pd)
    residual = np.sum((series - pd[..., None] * basis) ** 2, axis=-1)
    i, j = np.unravel_index(int(np.argmin(residual)), residual.shape)
    theta = np.array([opts.t1_grid[i], pd[i, j], opts.b_grid[j]])
    return opts.bounds.project(theta), float(residual[i, j])


def signed_jacobian(theta: np.ndarray, tis) -> tuple[np.ndarray, np.ndarray]:
    """Values and Jacobian of pd * (1 - b * exp(-ti / t1)) before the modulus is taken."""
    t1, pd, b = theta
    tis = np.asarray(tis, dtype=np.float64)
    decay = np.exp(-tis / t1)
    jac = np.empty((tis.size, 3))
    jac[:, 0] = -pd * b * decay * tis / t1**2
    jac[:, 1] = 1.0 - b * decay
    jac[:, 2] = -pd * decay
    return pd * (1.0 - b * decay), jac


def polarity_starts(
    series: np.ndarray, tis: np.ndarray, opts: FitOptions, count: int = _POLARITY_STARTS
) -> list[tuple[np.ndarray, np.ndarray]]:
    """
    Starting points from sign-restored data. The signed signal rises with ti, so it changes sign
    at most once along the sorted protocol. For every crossing position the samples before it
    are negated and a + c * exp(-ti / t1) is solved in closed form per t1 grid value, giving
    pd = a and b = -c / a.

    Returns (theta, signs) for the `count` crossing positions with the lowest residual.
    """
    n = tis.size
    signs = np.where(np.arange(n)[None, :] < np.arange(n + 1)[:, None], -1.0, 1.0)
    z = signs * series
    decay = np.exp(-tis[None, :] / np.asarray(opts.t1_grid)[:, None])
    s_e = decay.sum(axis=1)
    s_ee = np.sum(decay * decay, axis=1)
    det = n * s_ee - s_e**2
    s_z = z.sum(axis=1)[:, None]
    s_ze = z @ decay.T
    a = (s_ee * s_z - s_e * s_ze) / det
    c = (n * s_ze - s_e * s_z) / det
    cost = np.sum(z * z, axis=1)[:, None] - (a * s_z + c * s_ze)
    cost = np.where(a > 0, cost, np.inf)

    best_t1 = np.argmin(cost, axis=1)
    score = cost[np.arange(n + 1), best_t1]
    starts = []
    for k in np.argsort(score, kind="stable")[:count]:
        if not np.isfinite(score[k]):
            break
        g = best_t1[k]
        theta = np.array([opts.t1_grid[g], a[k, g], -c[k, g] / a[k, g]])
        starts.append((opts.bounds.project(theta), signs[k]))
    return starts


def refine(
    theta: np.ndarray,
    target: np.ndarray,
    tis: np.ndarray,
    opts: FitOptions,
    model: Callable[[np.ndarray, np.ndarray], tuple[np.ndarray, np.ndarray]] = ir_jacobian,
) -> Descent:
    """
    Levenberg-Marquardt on sum((target - model)^2) inside the bounds. Only steps that lower the
    cost are taken. Stops when the cost reaches the relative floor, when a step lowers it by
    less than opts.tol, or when no damping finds a lower cost.
    """
    floor = _RESIDUAL_FLOOR * float(target @ target)
    theta = opts.bounds.project(np.asarray(theta, dtype=np.float64))
    values, jac = model(theta, tis)
    residual = target - values
    cost = float(residual @ residual)
    history = [cost]

    lam = _LAMBDA_START
    stationary = cost <= floor
    iterations = 0
    while not stationary and iterations < opts.max_iters:
        iterations += 1
        jtj = jac.T @ jac
        damping = lam * np.diag(np.diag(jtj) + 1e-300)
        try:
            step = np.linalg.solve(jtj + damping, jac.T @ residual)
        except np.linalg.LinAlgError:
            lam *= 10
            stationary = lam > _LAMBDA_MAX
            continue
        candidate = opts.bounds.project(theta + step)
        cand_values, cand_jac = model(candidate, tis)
        cand_residual = target - cand_values
        cand_cost = float(cand_residual @ cand_residual)

        if cand_cost < cost:
            decrease = (cost - cand_cost) / cost
            theta, jac, residual, cost = candidate, cand_jac, cand_residual, cand_cost
            history.append(cost)
            lam = max(lam / 10, 1e-15)
            stationary = cost <= floor or decrease < opts.tol
        else:
            lam *= 10
            stationary = lam > _LAMBDA_MAX
    return Descent(theta, cost, iterations, stationary, history)


def fit_voxel(series: np.ndarray, protocol: Protocol, opts: FitOptions, sigma: float = 0.0) -> FitResult:
    """
    Least-squares fit of the IR model to one voxel: grid start, then damped Gauss-Newton.

    A fit is reported converged only when the descent stopped at a stationary point and the
    residual is explained by the data's noise: within opts.residual_tol of the signal norm, or
    within a few sigma per sample when the noise level is known. Otherwise the iterate with the
    lowest cost over the grid start and the sign-restored restarts is returned unconverged.
    """
    series = np.asarray(series, dtype=np.float64)
    if series.shape != (len(protocol),):
        raise ShapeMismatchError(f"series length {series.shape} does not match {len(protocol)} inversion times")
    if np.any(series < 0):
        raise DomainError("magnitude series values must be >= 0")
    if not sigma >= 0:
        raise DomainError(f"noise sigma must be >= 0, got {sigma}")
    if not np.any(series > 0):
        return FitResult(TissueParams.background(), 0.0, 0, converged=False, degenerate=True)

    tis = np.asarray(protocol.tis, dtype=np.float64)
    energy = float(series @ series)
    acceptable = max(opts.residual_tol**2 * energy, (_NOISE_BAND * sigma) ** 2 * series.size)

    theta, _ = grid_initialise(series, tis, opts)
    best = refine(theta, series, tis, opts)
    iterations = best.iterations
    explained = best.stationary and best.cost <= acceptable
    if best.cost > _RESIDUAL_FLOOR * energy and (sigma == 0 or not explained):
        for start, signs in polarity_starts(series, tis, opts):
            signed = refine(start, signs * series, tis, opts, model=signed_jacobian)
            polished = refine(signed.theta, series, tis, opts)
            iterations += signed.iterations + polished.iterations
            if polished.cost < best.cost:
                best = polished

    params = TissueParams(float(best.theta[0]), float(best.theta[1]), float(best.theta[2]))
    converged = best.stationary and best.cost <= acceptable
    return FitResult(params, float(np.sqrt(best.cost)), iterations, converged)


def _fit_rows(images: np.ndarray, protocol: Protocol, opts: FitOptions, sigma: float) -> list[list[FitResult]]:
    height, width = images.shape[1:]
    return [[fit_voxel(images[:, r, c], protocol, opts, sigma) for c in range(width)] for r in range(height)]


def fit_map(
    series: WeightedSeries, opts: FitOptions, n_jobs: int = 1, sigma: float = 0.0
) -> tuple[QuantMap, FitMapMeta]:
    """Voxel-wise fit of a whole series. Degenerate voxels are masked out; nothing aborts the map."""
    images = np.asarray(series.images, dtype=np.float64)
    height, width = series.shape
    chunks = np.array_split(np.arange(height), max(1, min(height, n_jobs * 4)))
    results = Parallel(n_jobs=n_jobs)(
        delayed(_fit_rows)(images[:, rows[0] : rows[-1] + 1, :], series.protocol, opts, sigma)
        for rows in chunks
        if len(rows)
    )
    rows = [row for chunk in results for row in chunk]

    channels = np.zeros((3, height, width))
    meta = FitMapMeta(
        converged=np.zeros((height, width), dtype=bool),
        degenerate=np.zeros((height, width), dtype=bool),
        iterations=np.zeros((height, width), dtype=np.int64),
        residual_norm=np.zeros((height, width)),
    )
    for r, row in enumerate(rows):
        for c, result in enumerate(row):
            channels[:, r, c] = result.params.as_array()
            meta.converged[r, c] = result.converged
            meta.degenerate[r, c] = result.degenerate or result.params.pd <= 0
            meta.iterations[r, c] = result.iterations
            meta.residual_norm[r, c] = result.residual_norm

    qmap = QuantMap.from_channels(channels, ~meta.degenerate)
    fitted = int((~meta.degenerate).sum())
    log.info(f"Fitted {fitted} voxels, {int(meta.converged.sum())} converged, {int(meta.degenerate.sum())} degenerate.")
    return qmap, meta


def fisher_information(params: TissueParams, protocol: Protocol, sigma: float) -> np.ndarray:
    jac = np.stack([signal_jacobian(params, ti) for ti in protocol.tis])
    return jac.T @ jac / sigma**2


def crlb_t1(params: TissueParams, protocol: Protocol, sigma: float) -> float:
    """Cramer-Rao bound on the std of any unbiased t1 estimator, seconds. inf when unidentifiable."""
    if not sigma > 0:
        raise DomainError(f"noise sigma must be > 0, got {sigma}")
    info = fisher_information(params, protocol, sigma)
    if np.linalg.cond(info) > 1.0 / np.finfo(np.float64).eps:
        return float("inf")
    return float(np.sqrt(np.linalg.inv(info)[0, 0]))
