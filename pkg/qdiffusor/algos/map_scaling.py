"""
Value scaling shared by the diffusion model and the regression baseline.

Maps enter the networks as f(x) = 2 * tanh(x) - 1 of normalised units: t1 in seconds,
pd divided by a dataset reference (99th percentile of foreground pd), b unchanged.
Conditions are divided by their own 99th-percentile magnitude.
"""

import logging
from dataclasses import dataclass

import numpy as np

log = logging.getLogger("qdiffusor.scaling")

UPPER_CLAMP = 1.0 - 1e-6
T1_MAX_SECONDS = 10.0
B_MAX = 2.0


def scale_map(x: np.ndarray) -> np.ndarray:
    """Elementwise 2 * tanh(x) - 1; maps [0, inf) into [-1, 1)."""
    return 2.0 * np.tanh(x) - 1.0


def unscale_map(v: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Inverse of scale_map. Values outside [-1, 1 - 1e-6] are clamped; the clamped voxels are returned as a flag."""
    v = np.asarray(v, dtype=np.float64)
    clamped = (v < -1.0) | (v > UPPER_CLAMP)
    x = np.arctanh((np.clip(v, -1.0, UPPER_CLAMP) + 1.0) / 2.0)
    return x, clamped


@dataclass(frozen=True)
class MapScaler:
    pd_ref: float = 1.0

    def normalise(self, channels: np.ndarray) -> np.ndarray:
        """(…, 3, H, W) physical channels -> normalised units."""
        out = np.array(channels, dtype=np.float64)
        out[..., 1, :, :] = out[..., 1, :, :] / self.pd_ref
        return out

    def denormalise(self, channels: np.ndarray) -> np.ndarray:
        out = np.array(channels, dtype=np.float64)
        out[..., 1, :, :] = out[..., 1, :, :] * self.pd_ref
        return out

    def forward(self, channels: np.ndarray) -> np.ndarray:
        return scale_map(self.normalise(channels))

    def inverse(self, scaled: np.ndarray) -> np.ndarray:
        """Scaled network output -> physical channels, clamped to physical bounds."""
        x, clamped = unscale_map(scaled)
        if clamped.any():
            log.debug(f"{int(clamped.sum())} values clamped while unscaling.")
        return clamp_physical(self.denormalise(x))

    @staticmethod
    def fit(maps: np.ndarray, masks: np.ndarray):
        """pd reference from the 99th percentile of foreground pd over (P, 3, H, W) maps."""
        foreground = maps[:, 1][masks.astype(bool)]
        if foreground.size == 0:
            return MapScaler(1.0)
        ref = float(np.percentile(foreground, 99))
        return MapScaler(ref if ref > 0 else 1.0)


def clamp_physical(channels: np.ndarray) -> np.ndarray:
    out = np.array(channels, dtype=np.float64)
    out[..., 0, :, :] = np.clip(out[..., 0, :, :], 0.0, T1_MAX_SECONDS)
    out[..., 1, :, :] = np.maximum(out[..., 1, :, :], 0.0)
    out[..., 2, :, :] = np.clip(out[..., 2, :, :], 0.0, B_MAX)
    return out


def normalise_condition(series: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """
    Divide each sample of a (P, N, H, W) or (N, H, W) series by its own 99th percentile.
    Returns the normalised series and the per-sample constants.
    """
    series = np.asarray(series, dtype=np.float64)
    batched = series if series.ndim == 4 else series[None]
    scale = np.percentile(batched.reshape(batched.shape[0], -1), 99, axis=1)
    scale = np.where(scale > 0, scale, 1.0)
    normed = batched / scale[:, None, None, None]
    return (normed if series.ndim == 4 else normed[0]), scale


CONDITION_FOREGROUND = 0.1


def condition_mask(images: np.ndarray, threshold: float = CONDITION_FOREGROUND) -> np.ndarray:
    """Foreground of a (N, H, W) series: voxels whose brightest image exceeds threshold after normalisation."""
    normed, _ = normalise_condition(images)
    return normed.max(axis=0) > threshold
