import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from joblib import Parallel, delayed

from qdiffusor.algos.signal_model import add_noise, ir_signal
from qdiffusor.model import DatasetManifest, NoiseSpec, Protocol, QuantMap, TissueParams, WeightedSeries
from qdiffusor.model.maps import CHANNEL_UNITS
from qdiffusor.services.container import read_container, write_container
from qdiffusor.services.phantoms import (
    b_variation_field,
    brain_labels,
    draw_tissues,
    fill_labels,
    rasterise_disks,
    sphere_layout,
)
from qdiffusor.utils.errors import ContainerError, DomainError
from qdiffusor.utils.rng import derive_rng, derive_seed

log = logging.getLogger("qdiffusor.dataset")

DATASET_KIND = "dataset"
_GEOMETRY_STREAM = 0
_PARAMETER_STREAM = 1
_NOISE_STREAM = 2


@dataclass
class PairDataset:
    """
    Paired maps and weighted series, stacked along the first axis.

    maps (P, 3, H, W) and series (P, N, H, W) are float32; labels hold the generator region of
    every voxel (0 = background).
    """

    maps: np.ndarray
    series: np.ndarray
    masks: np.ndarray
    labels: np.ndarray
    protocol: Protocol
    splits: list[str] = field(default_factory=list)
    slice_index: list[int] = field(default_factory=list)
    realisation: list[int] = field(default_factory=list)
    sigma: np.ndarray | None = None
    region_names: list[str] = field(default_factory=list)
    region_gt_std: list[float] = field(default_factory=list)
    manifest: DatasetManifest | None = None

    def __post_init__(self):
        count = self.maps.shape[0]
        self.masks = np.asarray(self.masks, dtype=bool)
        self.labels = np.asarray(self.labels).astype(np.int32)
        if self.maps.ndim != 4 or self.maps.shape[1] != 3:
            raise DomainError(f"dataset maps must be (P, 3, H, W), got {self.maps.shape}")
        if self.series.shape[0] != count or self.series.shape[2:] != self.maps.shape[2:]:
            raise DomainError(f"series {self.series.shape} does not pair with maps {self.maps.shape}")
        if self.series.shape[1] != len(self.protocol):
            raise DomainError(f"series has {self.series.shape[1]} images for {len(self.protocol)} inversion times")
        self.splits = list(self.splits) or ["train"] * count
        self.slice_index = list(self.slice_index) or list(range(count))
        self.realisation = list(self.realisation) or [0] * count
        if self.sigma is None:
            self.sigma = np.zeros(count)

    def __len__(self):
        return self.maps.shape[0]

    @property
    def shape(self) -> tuple[int, int]:
        return self.maps.shape[2:]

    def qmap(self, i: int) -> QuantMap:
        return QuantMap.from_channels(self.maps[i], self.masks[i])

    def weighted(self, i: int) -> WeightedSeries:
        return WeightedSeries(self.series[i], self.protocol)

    def region_name(self, label: int) -> str:
        if 0 < label <= len(self.region_names):
            return self.region_names[label - 1]
        return f"region_{label:02d}"

    def region_std(self, label: int) -> float:
        if 0 < label <= len(self.region_gt_std):
            return self.region_gt_std[label - 1]
        return 0.0

    def indices(self, split: str | None) -> np.ndarray:
        if split is None or split == "all":
            return np.arange(len(self))
        return np.array([i for i, tag in enumerate(self.splits) if tag == split], dtype=np.int64)

    def subset(self, split: str | None):
        idx = self.indices(split)
        return self.select(idx)

    def select(self, idx) -> "PairDataset":
        idx = np.asarray(idx, dtype=np.int64)
        if idx.size == 0:
            raise DomainError("selection is empty")
        return PairDataset(
            maps=self.maps[idx],
            series=self.series[idx],
            masks=self.masks[idx],
            labels=self.labels[idx],
            protocol=self.protocol,
            splits=[self.splits[i] for i in idx],
            slice_index=[self.slice_index[i] for i in idx],
            realisation=[self.realisation[i] for i in idx],
            sigma=self.sigma[idx],
            region_names=self.region_names,
            region_gt_std=self.region_gt_std,
            manifest=self.manifest,
        )

    @staticmethod
    def from_maps(qmaps: list[QuantMap], protocol: Protocol, labels: list[np.ndarray] | None = None):
        """Noiseless in-memory dataset from ground-truth maps."""
        maps = np.stack([q.channels() for q in qmaps]).astype(np.float32)
        series = ir_signal(maps[:, 0], maps[:, 1], maps[:, 2], protocol.tis).transpose(1, 0, 2, 3)
        masks = np.stack([q.mask for q in qmaps])
        labels = np.stack(labels) if labels is not None else masks.astype(np.int32)
        return PairDataset(maps, series.astype(np.float32), masks, labels, protocol)


def iter_batches(count: int, batch_size: int, rng: np.random.Generator):
    """Shuffled index batches covering every pair once; the last batch may be short."""
    order = rng.permutation(count)
    for start in range(0, count, batch_size):
        yield order[start : start + batch_size]


def _slice_geometry(manifest: DatasetManifest, slice_idx: int) -> np.ndarray:
    """
    Labels of one slice. For spheres, labels index the manifest's sphere T1 list so the same
    label means the same ground-truth T1 in every slice; positions are shuffled per slice.
    """
    rng = derive_rng(manifest.seed, slice_idx, _GEOMETRY_STREAM)
    if manifest.geometry == "spheres":
        count = len(manifest.sphere_t1)
        disks = sphere_layout(manifest.shape, count, rng)
        order = rng.permutation(count)
        return rasterise_disks(manifest.shape, [disks[i] for i in order])
    return brain_labels(manifest.shape, len(manifest.tissues), rng)


def _draw_params(manifest: DatasetManifest, rng: np.random.Generator) -> list[TissueParams]:
    if manifest.geometry == "spheres":
        b = float(rng.uniform(*manifest.sphere_b_range))
        pds = rng.uniform(*manifest.sphere_pd_range, size=len(manifest.sphere_t1))
        return [TissueParams(float(t1), float(pd), b) for t1, pd in zip(manifest.sphere_t1, pds)]
    return draw_tissues(manifest.tissues, rng)


def _realise_slice(manifest: DatasetManifest, protocol: Protocol, slice_idx: int) -> list[dict]:
    labels = _slice_geometry(manifest, slice_idx)
    pairs = []
    for r in range(manifest.realisations):
        rng = derive_rng(manifest.seed, slice_idx, r, _PARAMETER_STREAM)
        params = _draw_params(manifest, rng)
        b_field = b_variation_field(manifest.shape, params[0].b, rng) if manifest.b_spatial_variation else None
        qmap = fill_labels(labels, params, b_field)
        maps = qmap.channels().astype(np.float32)
        images = ir_signal(maps[0], maps[1], maps[2], protocol.tis)
        sigma = 0.0
        if not manifest.noiseless:
            noise_seed = derive_seed(manifest.seed, slice_idx, r, _NOISE_STREAM)
            spec = NoiseSpec.for_snr(maps[1].max(), manifest.snr, manifest.noise_kind, noise_seed)
            sigma = spec.sigma
            images = add_noise(images, spec)
        pairs.append(
            {
                "maps": maps,
                "series": images.astype(np.float32),
                "mask": qmap.mask,
                "labels": labels,
                "slice": slice_idx,
                "realisation": r,
                "sigma": sigma,
            }
        )
    log.debug(f"Realised slice {slice_idx} ({manifest.realisations} realisations, {manifest.geometry}).")
    return pairs


def _region_table(manifest: DatasetManifest) -> tuple[list[str], list[float]]:
    if manifest.geometry == "spheres":
        names = [f"sphere_{k + 1:02d}" for k in range(len(manifest.sphere_t1))]
        stds = list(manifest.sphere_t1_std) + [0.0] * (len(names) - len(manifest.sphere_t1_std))
        return names, stds[: len(names)]
    return [t.label for t in manifest.tissues], [0.0] * len(manifest.tissues)


def realise_dataset(
    manifest: DatasetManifest, protocol: Protocol, out: str | Path | None = None, n_jobs: int = 1
) -> PairDataset:
    """
    Generate every (slice, realisation) pair. Each slice draws from its own seed stream, so the
    result does not depend on n_jobs.
    """
    log.info(f"Realising {manifest.pair_count} pairs ({manifest.slices} slices x {manifest.realisations}).")
    per_slice = Parallel(n_jobs=n_jobs)(delayed(_realise_slice)(manifest, protocol, s) for s in range(manifest.slices))
    pairs = [pair for chunk in per_slice for pair in chunk]
    tags = manifest.split_tags()
    names, stds = _region_table(manifest)
    dataset = PairDataset(
        maps=np.stack([p["maps"] for p in pairs]),
        series=np.stack([p["series"] for p in pairs]),
        masks=np.stack([p["mask"] for p in pairs]),
        labels=np.stack([p["labels"] for p in pairs]),
        protocol=protocol,
        splits=[tags[p["slice"]] for p in pairs],
        slice_index=[p["slice"] for p in pairs],
        realisation=[p["realisation"] for p in pairs],
        sigma=np.array([p["sigma"] for p in pairs]),
        region_names=names,
        region_gt_std=stds,
        manifest=manifest,
    )
    low = [i for i in range(len(dataset)) if dataset.masks[i].mean() < 0.05]
    if low:
        raise DomainError(f"{len(low)} generated slices fall below 5% foreground")
    if out is not None:
        save_dataset(dataset, out)
    return dataset


def save_dataset(dataset: PairDataset, path: str | Path) -> Path:
    path = Path(path)
    meta = {
        "kind": DATASET_KIND,
        "protocol": dataset.protocol.to_dict(),
        "manifest": dataset.manifest.to_dict() if dataset.manifest else None,
        "splits": dataset.splits,
        "slice_index": [int(s) for s in dataset.slice_index],
        "realisation": [int(r) for r in dataset.realisation],
        "region_names": dataset.region_names,
        "region_gt_std_seconds": [float(s) for s in dataset.region_gt_std],
    }
    entries = {
        "maps": dataset.maps,
        "series": dataset.series,
        "masks": dataset.masks,
        "labels": dataset.labels,
        "sigma": dataset.sigma,
    }
    units = {"maps": ",".join(CHANNEL_UNITS.values()), "series": "a.u.", "sigma": "a.u."}
    write_container(path, entries, meta, units)
    sidecar = path.with_suffix(".manifest.json")
    sidecar.write_text(json.dumps({"pairs": len(dataset), **meta}, indent=2))
    log.info(f"Saved {len(dataset)} pairs to {path}.")
    return path


def load_dataset(path: str | Path, split: str | None = None) -> PairDataset:
    path = Path(path)
    container = read_container(path)
    meta = container.meta
    if meta.get("kind") != DATASET_KIND:
        raise ContainerError(path, f"expected a dataset container, found kind {meta.get('kind')!r}")
    manifest = DatasetManifest.from_dict(meta["manifest"]) if meta.get("manifest") else None
    dataset = PairDataset(
        maps=container["maps"],
        series=container["series"],
        masks=container["masks"] > 0.5,
        labels=np.rint(container["labels"]),
        protocol=Protocol.from_dict(meta["protocol"]),
        splits=meta.get("splits", []),
        slice_index=meta.get("slice_index", []),
        realisation=meta.get("realisation", []),
        sigma=container.entries.get("sigma"),
        region_names=meta.get("region_names", []),
        region_gt_std=meta.get("region_gt_std_seconds", []),
        manifest=manifest,
    )
    return dataset if split is None else dataset.subset(split)
