"""
Procedural phantoms: NIST/ISMRM-style sphere arrays and nested brain-like tissue layouts.

Geometry is a label image (0 = background, k = region k) so the same layout can be refilled with
new parameter draws for every realisation of a slice.
"""

import logging
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.ndimage import gaussian_filter

from qdiffusor.model import QuantMap, TissueParams, TissueSpec
from qdiffusor.utils.errors import DomainError

log = logging.getLogger("qdiffusor.phantoms")

MIN_FOREGROUND = 0.05
_LAYOUT_ATTEMPTS = 20


@dataclass(frozen=True)
class Disk:
    row: float
    col: float
    radius: float

    def overlaps(self, other: "Disk") -> bool:
        return math.hypot(self.row - other.row, self.col - other.col) < self.radius + other.radius

    def fits(self, shape: tuple[int, int]) -> bool:
        h, w = shape
        return (
            self.radius >= 1
            and self.row - self.radius >= -0.5
            and self.col - self.radius >= -0.5
            and self.row + self.radius <= h - 0.5
            and self.col + self.radius <= w - 0.5
        )


def sphere_layout(shape: tuple[int, int], count: int, seed, radius: float | None = None) -> list[Disk]:
    """
    One disk per cell of a ceil(sqrt(count)) square grid, centres jittered inside their cell.
    The default radius fills 40% of the smaller cell side.
    """
    if count < 1:
        raise DomainError("a sphere phantom needs at least one sphere")
    rng = np.random.default_rng(seed)
    side = math.ceil(math.sqrt(count))
    cell_h, cell_w = shape[0] / side, shape[1] / side
    radius = float(radius) if radius is not None else float(math.floor(0.4 * min(cell_h, cell_w)))
    if radius < 1:
        raise DomainError(f"{count} spheres do not fit in a {shape[0]}x{shape[1]} grid")
    disks = []
    for k in range(count):
        i, j = divmod(k, side)
        slack_h = max(0.0, cell_h / 2 - radius - 1)
        slack_w = max(0.0, cell_w / 2 - radius - 1)
        row = (i + 0.5) * cell_h - 0.5 + rng.uniform(-slack_h, slack_h)
        col = (j + 0.5) * cell_w - 0.5 + rng.uniform(-slack_w, slack_w)
        disks.append(Disk(row, col, radius))
    check_layout(disks, shape)
    return disks


def check_layout(disks: Sequence[Disk], shape: tuple[int, int]):
    for k, disk in enumerate(disks):
        if not disk.fits(shape):
            raise DomainError(f"sphere {k} at ({disk.row:.1f}, {disk.col:.1f}) r={disk.radius} leaves the grid")
        for m in range(k):
            if disk.overlaps(disks[m]):
                raise DomainError(f"spheres {m} and {k} overlap")


def rasterise_disks(shape: tuple[int, int], disks: Sequence[Disk]) -> np.ndarray:
    rows, cols = np.indices(shape)
    labels = np.zeros(shape, dtype=np.int32)
    for k, disk in enumerate(disks, start=1):
        labels[(rows - disk.row) ** 2 + (cols - disk.col) ** 2 <= disk.radius**2] = k
    return labels


def fill_labels(
    labels: np.ndarray, params: Sequence[TissueParams], b_field: np.ndarray | None = None
) -> QuantMap:
    """Paint params[k - 1] into every voxel labelled k. b_field, when given, replaces b in the foreground."""
    channels = np.zeros((3,) + labels.shape)
    for k, p in enumerate(params, start=1):
        region = labels == k
        channels[0][region] = p.t1
        channels[1][region] = p.pd
        channels[2][region] = p.b
    mask = labels > 0
    if b_field is not None:
        channels[2] = np.where(mask, b_field, 0.0)
    return QuantMap.from_channels(channels, mask)


def make_sphere_phantom(
    shape: tuple[int, int],
    sphere_t1_list: Sequence[float],
    pd: float | Sequence[float],
    b: float | Sequence[float],
    seed,
    disks: Sequence[Disk] | None = None,
) -> QuantMap:
    """Disk k carries sphere_t1_list[k]; pd and b are one value for all disks or one per disk."""
    count = len(sphere_t1_list)
    if disks is None:
        disks = sphere_layout(shape, count, seed)
    elif len(disks) != count:
        raise DomainError(f"{len(disks)} disks for {count} sphere T1 values")
    check_layout(disks, shape)
    pds = np.broadcast_to(np.asarray(pd, dtype=np.float64), (count,))
    bs = np.broadcast_to(np.asarray(b, dtype=np.float64), (count,))
    params = [TissueParams(float(t1), float(p), float(bb)).validate() for t1, p, bb in zip(sphere_t1_list, pds, bs)]
    return fill_labels(rasterise_disks(shape, disks), params)


def _smooth_field(shape: tuple[int, int], rng: np.random.Generator, scale: float) -> np.ndarray:
    field = gaussian_filter(rng.standard_normal(shape), sigma=max(1.0, min(shape) / scale), mode="wrap")
    std = field.std()
    return field / std if std > 0 else field


def brain_labels(
    shape: tuple[int, int], tissue_count: int, rng: np.random.Generator, full_field: bool = False
) -> np.ndarray:
    """
    Nested smooth regions: label 1 is the outermost tissue, label tissue_count the innermost.
    With full_field the outermost tissue covers the whole grid.
    """
    if tissue_count < 1:
        raise DomainError("a brain phantom needs at least one tissue")
    levels = np.linspace(0.95, 0.35, tissue_count + 1)[:-1]
    for attempt in range(_LAYOUT_ATTEMPTS):
        h, w = shape
        rows, cols = np.indices(shape)
        axes = rng.uniform(0.75, 0.95, size=2)
        centre = rng.uniform(-0.05, 0.05, size=2)
        y = (rows - (h - 1) / 2) / (h / 2) - centre[0]
        x = (cols - (w - 1) / 2) / (w / 2) - centre[1]
        radius = np.hypot(y / axes[0], x / axes[1]) + 0.08 * _smooth_field(shape, rng, 8.0)
        labels = np.zeros(shape, dtype=np.int32)
        for k, level in enumerate(levels, start=1):
            labels[radius < level] = k
        if full_field:
            labels[labels == 0] = 1
        if (labels > 0).mean() >= MIN_FOREGROUND:
            return labels
        log.debug(f"Brain layout attempt {attempt} below {MIN_FOREGROUND:.0%} foreground, redrawing.")
    raise DomainError(f"could not draw a brain layout with >= {MIN_FOREGROUND:.0%} foreground on {shape}")


def draw_tissues(tissues: Sequence[TissueSpec], rng: np.random.Generator) -> list[TissueParams]:
    """
    One draw per tissue. Inversion efficiency is shared across the slice and taken from the
    outermost tissue's draw.
    """
    draws = [t.draw(rng) for t in tissues]
    b = draws[0].b
    return [TissueParams(d.t1, d.pd, b) for d in draws]


def b_variation_field(
    shape: tuple[int, int], b: float, rng: np.random.Generator, amplitude: float = 0.05
) -> np.ndarray:
    return np.clip(b + amplitude * _smooth_field(shape, rng, 2.0), 0.0, 2.0)


def make_brain_phantom(
    shape: tuple[int, int],
    tissues: Sequence[TissueSpec],
    seed,
    b_variation: bool = False,
    full_field: bool = False,
) -> QuantMap:
    rng = np.random.default_rng(seed)
    labels = brain_labels(shape, len(tissues), rng, full_field)
    params = draw_tissues(tissues, rng)
    b_field = b_variation_field(shape, params[0].b, rng) if b_variation else None
    return fill_labels(labels, params, b_field)
