from dataclasses import dataclass, field

import numpy as np
import pandas as pd

from qdiffusor.model.maps import QuantMap
from qdiffusor.model.tissue import IN_VIVO_T1_RANGE_MS, TissueParams
from qdiffusor.utils.errors import DomainError

REPORT_COLUMNS = [
    "region",
    "gt_t1_ms",
    "gt_std_ms",
    "method",
    "est_mean_ms",
    "est_std_ms",
    "rel_bias",
    "est_pd_mean",
    "est_pd_std",
    "voxels",
    "in_vivo_range",
]


@dataclass
class RoiSpec:
    """Labelled voxel sets with the ground truth of each region."""

    regions: dict[str, np.ndarray]
    truth: dict[str, TissueParams]
    gt_std: dict[str, float] = field(default_factory=dict)

    def __post_init__(self):
        if set(self.regions) != set(self.truth):
            raise DomainError("every region needs a ground truth entry")
        seen = None
        for label, region in self.regions.items():
            region = np.asarray(region, dtype=bool)
            self.regions[label] = region
            if not region.any():
                raise DomainError(f"region {label!r} is empty")
            if seen is None:
                seen = np.zeros(region.shape, dtype=bool)
            if region.shape != seen.shape:
                raise DomainError(f"region {label!r} shape {region.shape} differs from {seen.shape}")
            if np.any(seen & region):
                raise DomainError(f"region {label!r} overlaps another region")
            seen |= region

    @property
    def shape(self):
        return next(iter(self.regions.values())).shape


@dataclass(frozen=True)
class RoiRow:
    region: str
    gt_t1_ms: float
    gt_std_ms: float
    method: str
    est_mean_ms: float
    est_std_ms: float
    rel_bias: float
    est_pd_mean: float
    est_pd_std: float
    voxels: int

    @property
    def in_vivo_range(self) -> bool:
        lo, hi = IN_VIVO_T1_RANGE_MS
        return lo <= self.gt_t1_ms <= hi

    def to_dict(self):
        return {
            "region": self.region,
            "gt_t1_ms": self.gt_t1_ms,
            "gt_std_ms": self.gt_std_ms,
            "method": self.method,
            "est_mean_ms": self.est_mean_ms,
            "est_std_ms": self.est_std_ms,
            "rel_bias": self.rel_bias,
            "est_pd_mean": self.est_pd_mean,
            "est_pd_std": self.est_pd_std,
            "voxels": self.voxels,
            "in_vivo_range": self.in_vivo_range,
        }


@dataclass
class RoiReport:
    rows: list[RoiRow] = field(default_factory=list)

    def merge(self, other: "RoiReport") -> "RoiReport":
        return RoiReport(self.rows + other.rows)

    def methods(self) -> list[str]:
        return list(dict.fromkeys(row.method for row in self.rows))

    def row(self, region: str, method: str) -> RoiRow:
        for row in self.rows:
            if row.region == region and row.method == method:
                return row
        raise KeyError(f"{region}/{method}")

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame([row.to_dict() for row in self.rows], columns=REPORT_COLUMNS)

    def to_wide_frame(self) -> pd.DataFrame:
        """One row per region: GT, then 'mean ± std' per method."""
        frame = self.to_frame()
        if frame.empty:
            return frame
        frame["cell"] = frame.apply(lambda r: f"{r['est_mean_ms']:.0f} ± {r['est_std_ms']:.0f}", axis=1)
        index = ["region", "gt_t1_ms", "gt_std_ms"]
        wide = frame.pivot_table(index=index, columns="method", values="cell", aggfunc="first")
        wide = wide.reset_index().sort_values("gt_t1_ms", ascending=False)
        wide.insert(1, "GT", wide.apply(lambda r: f"{r['gt_t1_ms']:.0f} ± {r['gt_std_ms']:.0f}", axis=1))
        wide.columns.name = None
        return wide.drop(columns=["gt_t1_ms", "gt_std_ms"])


@dataclass
class UncertaintyResult:
    """Mean of K repeated estimates; std_map is (3, H, W) and only defined for K >= 2."""

    mean_map: QuantMap
    std_map: np.ndarray | None
    k: int
    seeds: list[int]
    samples: list[QuantMap] = field(default_factory=list)

    def __post_init__(self):
        if self.std_map is not None and np.any(self.std_map < 0):
            raise DomainError("standard deviations are non-negative")


@dataclass(frozen=True)
class ChannelMetrics:
    rmse: float
    mare: float
    bias: float

    def to_dict(self):
        return {"rmse": self.rmse, "mare": self.mare, "bias": self.bias}


@dataclass(frozen=True)
class RankCorrelation:
    rho: float
    defined: bool
    voxels: int
