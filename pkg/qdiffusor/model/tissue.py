from dataclasses import dataclass

import numpy as np

from qdiffusor.utils.errors import DomainError

# Reference T1 of the NiCl2 spheres of the NIST/ISMRM system phantom (3T, 20 C), milliseconds.
NIST_SPHERE_T1_MS = (1884, 1330, 987, 690, 485, 342, 241, 175, 121, 85, 60, 43, 30, 21)
NIST_SPHERE_T1_STD_MS = (30, 20, 14, 10, 7, 5, 3, 3, 2, 1, 1, 1, 1, 1)

IN_VIVO_T1_RANGE_MS = (400.0, 2000.0)


@dataclass(frozen=True)
class TissueParams:
    t1: float
    pd: float
    b: float

    def validate(self):
        if not self.t1 > 0:
            raise DomainError(f"t1 must be > 0 seconds, got {self.t1}")
        if not self.pd >= 0:
            raise DomainError(f"pd must be >= 0, got {self.pd}")
        if not 0 <= self.b <= 2:
            raise DomainError(f"b must lie in [0, 2], got {self.b}")
        return self

    def as_array(self) -> np.ndarray:
        return np.array([self.t1, self.pd, self.b], dtype=np.float64)

    def to_dict(self):
        return {"t1": self.t1, "pd": self.pd, "b": self.b}

    @staticmethod
    def background():
        """Parameter triple used outside the foreground mask."""
        return TissueParams(0.0, 0.0, 0.0)


@dataclass(frozen=True)
class TissueSpec:
    label: str
    t1_range: tuple[float, float]
    pd_range: tuple[float, float]
    b_range: tuple[float, float]

    def __post_init__(self):
        for name in ("t1_range", "pd_range", "b_range"):
            lo, hi = getattr(self, name)
            if lo > hi:
                raise DomainError(f"{self.label}.{name}: lo {lo} exceeds hi {hi}")
        if self.t1_range[0] <= 0:
            raise DomainError(f"{self.label}.t1_range must be > 0")
        if self.pd_range[0] < 0:
            raise DomainError(f"{self.label}.pd_range must be >= 0")
        if self.b_range[0] < 0 or self.b_range[1] > 2:
            raise DomainError(f"{self.label}.b_range must lie in [0, 2]")

    def draw(self, rng: np.random.Generator) -> TissueParams:
        """One uniform draw inside every range."""
        t1 = rng.uniform(*self.t1_range)
        pd = rng.uniform(*self.pd_range)
        b = rng.uniform(*self.b_range)
        return TissueParams(float(t1), float(pd), float(b))

    def to_dict(self):
        return {
            "label": self.label,
            "t1_range": list(self.t1_range),
            "pd_range": list(self.pd_range),
            "b_range": list(self.b_range),
        }

    @staticmethod
    def from_dict(data: dict):
        return TissueSpec(
            label=str(data["label"]),
            t1_range=tuple(float(v) for v in data["t1_range"]),
            pd_range=tuple(float(v) for v in data["pd_range"]),
            b_range=tuple(float(v) for v in data["b_range"]),
        )


# Outermost first: nested layouts place later tissues inside earlier ones.
DEFAULT_TISSUES = (
    TissueSpec("csf", (3.0, 4.5), (0.6, 1.0), (1.8, 2.0)),
    TissueSpec("gm", (1.2, 1.7), (0.6, 1.0), (1.8, 2.0)),
    TissueSpec("wm", (0.7, 1.0), (0.6, 1.0), (1.8, 2.0)),
)
