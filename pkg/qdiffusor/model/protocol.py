from dataclasses import dataclass, field
from enum import Enum

from qdiffusor.utils.errors import DomainError

DEFAULT_TIS_SECONDS = (0.05, 0.10, 0.25, 0.50, 0.85, 1.50, 2.50)


@dataclass(frozen=True)
class Protocol:
    tis: tuple[float, ...] = DEFAULT_TIS_SECONDS

    def __post_init__(self):
        tis = tuple(float(ti) for ti in self.tis)
        object.__setattr__(self, "tis", tis)
        if len(tis) == 0:
            raise DomainError("protocol needs at least one inversion time")
        if any(ti <= 0 for ti in tis):
            raise DomainError(f"inversion times must be > 0 seconds: {tis}")
        if any(b <= a for a, b in zip(tis, tis[1:])):
            raise DomainError(f"inversion times must be strictly increasing: {tis}")

    def __len__(self):
        return len(self.tis)

    def to_dict(self):
        return {"tis_seconds": list(self.tis)}

    @staticmethod
    def from_dict(data: dict):
        return Protocol(tuple(data["tis_seconds"]))


class NoiseKind(str, Enum):
    GAUSSIAN_MAGNITUDE = "gaussian_magnitude"
    RICIAN = "rician"


DEFAULT_SNR = 50.0


@dataclass(frozen=True)
class NoiseSpec:
    kind: NoiseKind = NoiseKind.RICIAN
    sigma: float = 0.0
    seed: int | tuple[int, ...] = field(default=0)

    def __post_init__(self):
        object.__setattr__(self, "kind", NoiseKind(self.kind))
        if not self.sigma >= 0:
            raise DomainError(f"noise sigma must be >= 0, got {self.sigma}")

    @staticmethod
    def for_snr(max_pd: float, snr: float, kind: NoiseKind = NoiseKind.RICIAN, seed=0):
        """sigma = max(PD) / SNR for one series."""
        return NoiseSpec(kind, float(max_pd) / float(snr), seed)
