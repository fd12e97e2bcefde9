from dataclasses import dataclass

import numpy as np

from qdiffusor.model.protocol import Protocol
from qdiffusor.model.tissue import TissueParams
from qdiffusor.utils.errors import DomainError, ShapeMismatchError

CHANNELS = ("t1", "pd", "b")
CHANNEL_UNITS = {"t1": "s", "pd": "a.u.", "b": "1"}


@dataclass
class QuantMap:
    t1_map: np.ndarray
    pd_map: np.ndarray
    b_map: np.ndarray
    mask: np.ndarray

    def __post_init__(self):
        self.mask = np.asarray(self.mask, dtype=bool)
        shape = self.mask.shape
        if len(shape) != 2:
            raise ShapeMismatchError(f"quantitative maps are 2-D, got mask shape {shape}")
        for name in ("t1_map", "pd_map", "b_map"):
            grid = np.asarray(getattr(self, name))
            if grid.shape != shape:
                raise ShapeMismatchError(f"{name} shape {grid.shape} differs from mask shape {shape}")
            setattr(self, name, grid)

    @property
    def shape(self) -> tuple[int, int]:
        return self.mask.shape

    def channels(self) -> np.ndarray:
        """(3, H, W) stack in t1, pd, b order."""
        return np.stack([self.t1_map, self.pd_map, self.b_map])

    def params_at(self, row: int, col: int) -> TissueParams:
        return TissueParams(float(self.t1_map[row, col]), float(self.pd_map[row, col]), float(self.b_map[row, col]))

    def foreground_fraction(self) -> float:
        return float(self.mask.mean())

    def validate(self):
        m = self.mask
        if np.any(self.t1_map[m] <= 0) or np.any(self.pd_map[m] <= 0):
            raise DomainError("foreground voxels need t1 > 0 and pd > 0")
        if np.any(self.b_map[m] < 0) or np.any(self.b_map[m] > 2):
            raise DomainError("foreground voxels need 0 <= b <= 2")
        outside = ~m
        if np.any(self.t1_map[outside] != 0) or np.any(self.pd_map[outside] != 0) or np.any(self.b_map[outside] != 0):
            raise DomainError("background voxels must be zero in every channel")
        return self

    @staticmethod
    def from_channels(channels: np.ndarray, mask: np.ndarray):
        """Build a map from a (3, H, W) stack, zeroing everything outside the mask."""
        channels = np.asarray(channels)
        if channels.ndim != 3 or channels.shape[0] != 3:
            raise ShapeMismatchError(f"expected (3, H, W) channels, got {channels.shape}")
        mask = np.asarray(mask, dtype=bool)
        zeroed = np.where(mask[None], channels, 0).astype(channels.dtype)
        return QuantMap(zeroed[0], zeroed[1], zeroed[2], mask)

    @staticmethod
    def constant(shape: tuple[int, int], params: TissueParams, mask: np.ndarray | None = None):
        mask = np.ones(shape, dtype=bool) if mask is None else np.asarray(mask, dtype=bool)
        return QuantMap.from_channels(
            np.stack([np.full(shape, params.t1), np.full(shape, params.pd), np.full(shape, params.b)]), mask
        )


@dataclass
class WeightedSeries:
    images: np.ndarray
    protocol: Protocol

    def __post_init__(self):
        self.images = np.asarray(self.images)
        if self.images.ndim != 3:
            raise ShapeMismatchError(f"weighted series is (channel, H, W), got {self.images.shape}")
        if self.images.shape[0] != len(self.protocol):
            raise ShapeMismatchError(
                f"series has {self.images.shape[0]} channels but protocol has {len(self.protocol)} inversion times"
            )
        if np.any(self.images < 0):
            raise DomainError("weighted images are magnitudes and must be >= 0")

    @property
    def shape(self) -> tuple[int, int]:
        return self.images.shape[1:]
