from dataclasses import dataclass, field

import numpy as np

from qdiffusor.model.tissue import TissueParams
from qdiffusor.utils.errors import DomainError


@dataclass(frozen=True)
class Bounds:
    t1: tuple[float, float] = (0.01, 10.0)
    pd: tuple[float, float] = (0.0, 10.0)
    b: tuple[float, float] = (0.0, 2.0)

    def lower(self) -> np.ndarray:
        return np.array([self.t1[0], self.pd[0], self.b[0]])

    def upper(self) -> np.ndarray:
        return np.array([self.t1[1], self.pd[1], self.b[1]])

    def project(self, theta: np.ndarray) -> np.ndarray:
        return np.clip(theta, self.lower(), self.upper())

    def contains(self, params: TissueParams) -> bool:
        theta = params.as_array()
        return bool(np.all(theta >= self.lower()) and np.all(theta <= self.upper()))


def _default_t1_grid():
    return tuple(np.geomspace(0.05, 5.0, 40).tolist())


@dataclass(frozen=True)
class FitOptions:
    t1_grid: tuple[float, ...] = field(default_factory=_default_t1_grid)
    b_grid: tuple[float, ...] = (1.6, 1.7, 1.8, 1.9, 2.0)
    max_iters: int = 100
    tol: float = 1e-12
    residual_tol: float = 1e-6
    bounds: Bounds = field(default_factory=Bounds)

    def __post_init__(self):
        object.__setattr__(self, "t1_grid", tuple(sorted(float(v) for v in self.t1_grid)))
        object.__setattr__(self, "b_grid", tuple(float(v) for v in self.b_grid))
        if not self.t1_grid or not self.b_grid:
            raise DomainError("fit grids must be non-empty")
        if not self.tol > 0:
            raise DomainError(f"fit tolerance must be > 0, got {self.tol}")
        if not self.residual_tol >= 0:
            raise DomainError(f"residual tolerance must be >= 0, got {self.residual_tol}")
        if self.max_iters < 1:
            raise DomainError("max_iters must be >= 1")
        lo, hi = self.bounds.lower(), self.bounds.upper()
        if np.any(lo > hi) or lo[0] <= 0 or lo[1] < 0 or lo[2] < 0 or hi[2] > 2:
            raise DomainError(f"fit bounds inconsistent with tissue parameter ranges: {self.bounds}")

    @staticmethod
    def from_dict(data: dict):
        grid = data.get("t1_grid", {})
        t1_grid = np.geomspace(float(grid.get("lo", 0.05)), float(grid.get("hi", 5.0)), int(grid.get("n", 40)))
        bounds = data.get("bounds", {})
        return FitOptions(
            t1_grid=tuple(t1_grid.tolist()),
            b_grid=tuple(data.get("b_grid", (1.6, 1.7, 1.8, 1.9, 2.0))),
            max_iters=int(data.get("max_iters", 100)),
            tol=float(data.get("tol", 1e-12)),
            residual_tol=float(data.get("residual_tol", 1e-6)),
            bounds=Bounds(
                t1=tuple(bounds.get("t1", (0.01, 10.0))),
                pd=tuple(bounds.get("pd", (0.0, 10.0))),
                b=tuple(bounds.get("b", (0.0, 2.0))),
            ),
        )


@dataclass(frozen=True)
class FitResult:
    params: TissueParams
    residual_norm: float
    iterations: int
    converged: bool
    degenerate: bool = False
