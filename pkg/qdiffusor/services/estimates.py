from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from qdiffusor.model import QuantMap
from qdiffusor.model.maps import CHANNEL_UNITS
from qdiffusor.services.container import read_container, write_container
from qdiffusor.utils.errors import ContainerError

ESTIMATES_KIND = "estimates"
_RESERVED = ("maps", "masks", "std")


@dataclass
class Estimates:
    """
    Maps estimated by one method for a selection of dataset pairs. pair_index holds the position
    of every map in the full dataset; extra carries per-method arrays such as the MLE convergence
    bitmap, stacked along the pair axis.
    """

    method: str
    maps: list[QuantMap]
    pair_index: list[int]
    std: np.ndarray | None = None
    extra: dict[str, np.ndarray] = field(default_factory=dict)
    meta: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.maps)


def save_estimates(path: str | Path, estimates: Estimates) -> Path:
    if not estimates.maps:
        raise ContainerError(path, "refusing to write an estimates container without maps")
    entries = {
        "maps": np.stack([q.channels() for q in estimates.maps]),
        "masks": np.stack([q.mask for q in estimates.maps]),
    }
    if estimates.std is not None:
        entries["std"] = estimates.std
    for name, values in estimates.extra.items():
        if name in _RESERVED:
            raise ContainerError(path, f"extra entry {name!r} clashes with a reserved entry")
        entries[name] = values
    meta = {**estimates.meta, "kind": ESTIMATES_KIND, "method": estimates.method, "pair_index": estimates.pair_index}
    units = {"maps": ",".join(CHANNEL_UNITS.values()), "std": ",".join(CHANNEL_UNITS.values())}
    return write_container(path, entries, meta, units)


def load_estimates(path: str | Path) -> Estimates:
    path = Path(path)
    container = read_container(path)
    if container.meta.get("kind") != ESTIMATES_KIND:
        raise ContainerError(path, f"expected an estimates container, found kind {container.meta.get('kind')!r}")
    masks = container["masks"] > 0.5
    maps = [QuantMap.from_channels(m, mask) for m, mask in zip(container["maps"], masks)]
    meta = {k: v for k, v in container.meta.items() if k not in ("kind", "method", "pair_index")}
    return Estimates(
        method=container.meta.get("method", path.stem),
        maps=maps,
        pair_index=[int(i) for i in container.meta.get("pair_index", range(len(maps)))],
        std=container.entries.get("std"),
        extra={k: v for k, v in container.entries.items() if k not in _RESERVED},
        meta=meta,
    )
