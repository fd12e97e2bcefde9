from dataclasses import dataclass, field

from qdiffusor.model.protocol import DEFAULT_SNR, NoiseKind
from qdiffusor.model.tissue import DEFAULT_TISSUES, NIST_SPHERE_T1_MS, NIST_SPHERE_T1_STD_MS, TissueSpec
from qdiffusor.utils.errors import DomainError
from qdiffusor.utils.rng import derive_rng

SPLITS = ("train", "val", "test")
GEOMETRIES = ("brain", "spheres")


@dataclass(frozen=True)
class DatasetManifest:
    slices: int = 200
    realisations: int = 4
    shape: tuple[int, int] = (64, 64)
    seed: int = 0
    geometry: str = "brain"
    noise_kind: NoiseKind = NoiseKind.RICIAN
    snr: float | None = DEFAULT_SNR
    tissues: tuple[TissueSpec, ...] = DEFAULT_TISSUES
    sphere_t1: tuple[float, ...] = tuple(t / 1000.0 for t in NIST_SPHERE_T1_MS)
    sphere_t1_std: tuple[float, ...] = tuple(t / 1000.0 for t in NIST_SPHERE_T1_STD_MS)
    sphere_pd_range: tuple[float, float] = (0.6, 1.0)
    sphere_b_range: tuple[float, float] = (1.8, 2.0)
    split_fractions: dict = field(default_factory=lambda: {"train": 0.8, "val": 0.1, "test": 0.1})
    b_spatial_variation: bool = False

    def __post_init__(self):
        object.__setattr__(self, "shape", tuple(int(s) for s in self.shape))
        object.__setattr__(self, "noise_kind", NoiseKind(self.noise_kind))
        object.__setattr__(self, "tissues", tuple(self.tissues))
        if self.slices <= 0 or self.realisations <= 0:
            raise DomainError("manifest needs slices > 0 and realisations > 0")
        if len(self.shape) != 2 or min(self.shape) <= 0:
            raise DomainError(f"manifest shape must be (height, width), got {self.shape}")
        if self.geometry not in GEOMETRIES:
            raise DomainError(f"unknown geometry {self.geometry!r}, expected one of {GEOMETRIES}")
        if self.geometry == "brain" and len(self.tissues) == 0:
            raise DomainError("brain geometry needs at least one tissue")
        if self.snr is not None and self.snr <= 0:
            raise DomainError(f"snr must be > 0 or null, got {self.snr}")
        if set(self.split_fractions) - set(SPLITS):
            raise DomainError(f"split tags must be among {SPLITS}")
        if abs(sum(self.split_fractions.values()) - 1.0) > 1e-9:
            raise DomainError("split fractions must sum to 1")

    @property
    def pair_count(self) -> int:
        return self.slices * self.realisations

    @property
    def noiseless(self) -> bool:
        return self.snr is None

    def split_tags(self) -> list[str]:
        """
        One tag per slice geometry. Realisations of a slice always share its tag so no
        geometry leaks between splits.
        """
        order = derive_rng(self.seed, 0x5117).permutation(self.slices)
        tags = [""] * self.slices
        start = 0
        names = [s for s in SPLITS if s in self.split_fractions]
        for i, name in enumerate(names):
            if i == len(names) - 1:
                stop = self.slices
            else:
                stop = start + int(round(self.split_fractions[name] * self.slices))
            for idx in order[start:stop]:
                tags[int(idx)] = name
            start = stop
        return tags

    def to_dict(self):
        return {
            "slices": self.slices,
            "realisations": self.realisations,
            "shape": list(self.shape),
            "seed": self.seed,
            "geometry": self.geometry,
            "noise": {"kind": self.noise_kind.value, "snr": self.snr},
            "tissues": [t.to_dict() for t in self.tissues],
            "sphere_t1_seconds": list(self.sphere_t1),
            "sphere_t1_std_seconds": list(self.sphere_t1_std),
            "sphere_pd_range": list(self.sphere_pd_range),
            "sphere_b_range": list(self.sphere_b_range),
            "split": dict(self.split_fractions),
            "b_spatial_variation": self.b_spatial_variation,
        }

    @staticmethod
    def from_dict(data: dict):
        noise = data.get("noise", {})
        kwargs = {
            "slices": int(data.get("slices", 200)),
            "realisations": int(data.get("realisations", 4)),
            "shape": tuple(data.get("shape", (64, 64))),
            "seed": int(data.get("seed", 0)),
            "geometry": data.get("geometry", "brain"),
            "noise_kind": NoiseKind(noise.get("kind", NoiseKind.RICIAN)),
            "snr": noise.get("snr", DEFAULT_SNR),
            "b_spatial_variation": bool(data.get("b_spatial_variation", False)),
        }
        if "tissues" in data:
            kwargs["tissues"] = tuple(TissueSpec.from_dict(t) for t in data["tissues"])
        if "sphere_t1_seconds" in data:
            kwargs["sphere_t1"] = tuple(float(v) for v in data["sphere_t1_seconds"])
        if "sphere_t1_std_seconds" in data:
            kwargs["sphere_t1_std"] = tuple(float(v) for v in data["sphere_t1_std_seconds"])
        if "sphere_pd_range" in data:
            kwargs["sphere_pd_range"] = tuple(data["sphere_pd_range"])
        if "sphere_b_range" in data:
            kwargs["sphere_b_range"] = tuple(data["sphere_b_range"])
        if "split" in data:
            kwargs["split_fractions"] = {k: float(v) for k, v in data["split"].items()}
        return DatasetManifest(**kwargs)
