import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from qdiffusor.nn import OptimState
from qdiffusor.nn.layers import Module
from qdiffusor.services.container import read_container, write_container
from qdiffusor.utils.errors import ContainerError

log = logging.getLogger("qdiffusor.io")

_PARAM = "param/"
_MOMENT1 = "adam_m/"
_MOMENT2 = "adam_v/"


@dataclass
class Checkpoint:
    kind: str
    params: dict[str, np.ndarray]
    optim: OptimState
    meta: dict = field(default_factory=dict)

    @property
    def epoch(self) -> int:
        return int(self.meta.get("epoch", 0))

    @property
    def loss_log(self) -> list[float]:
        return [float(v) for v in self.meta.get("loss_log", [])]


def save_checkpoint(path: str | Path, kind: str, net: Module, optim: OptimState, meta: dict) -> Path:
    entries = {f"{_PARAM}{name}": value for name, value in net.state_dict().items()}
    entries.update({f"{_MOMENT1}{name}": value for name, value in optim.m.items()})
    entries.update({f"{_MOMENT2}{name}": value for name, value in optim.v.items()})
    full_meta = {**meta, "kind": kind, "optim": optim.to_meta(), "pd_ref": float(getattr(net, "pd_ref", 1.0))}
    return write_container(path, entries, full_meta)


def load_checkpoint(path: str | Path, kind: str | None = None) -> Checkpoint:
    path = Path(path)
    container = read_container(path)
    meta = container.meta
    if kind is not None and meta.get("kind") != kind:
        raise ContainerError(path, f"expected a {kind} checkpoint, found kind {meta.get('kind')!r}")

    def section(prefix: str) -> dict[str, np.ndarray]:
        return {name[len(prefix) :]: value for name, value in container.entries.items() if name.startswith(prefix)}

    optim_meta = meta.get("optim", {})
    optim = OptimState(
        learning_rate=float(optim_meta.get("learning_rate", 1e-4)),
        beta1=float(optim_meta.get("beta1", 0.9)),
        beta2=float(optim_meta.get("beta2", 0.999)),
        eps=float(optim_meta.get("eps", 1e-8)),
        step=int(optim_meta.get("step", 0)),
        m=section(_MOMENT1),
        v=section(_MOMENT2),
    )
    log.debug(f"Loaded {meta.get('kind')} checkpoint from {path} at epoch {meta.get('epoch', 0)}.")
    return Checkpoint(kind=meta.get("kind", ""), params=section(_PARAM), optim=optim, meta=meta)
