"""Epoch loop shared by the diffusion and regression trainers."""

import logging
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np
import pandas as pd

from qdiffusor.nn import OptimState, Tensor, adam_step
from qdiffusor.nn.layers import Module
from qdiffusor.services.checkpoints import save_checkpoint
from qdiffusor.services.dataset import iter_batches
from qdiffusor.utils.errors import TrainingDivergedError
from qdiffusor.utils.rng import derive_rng

BatchLoss = Callable[[np.ndarray, np.random.Generator], Tensor]


@dataclass
class LossLog:
    """Mean loss per epoch, plus every batch loss."""

    epochs: list[float] = field(default_factory=list)
    batches: list[float] = field(default_factory=list)
    seconds: list[float] = field(default_factory=list)

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame(
            {"epoch": np.arange(1, len(self.epochs) + 1), "mean_loss": self.epochs, "seconds": self.seconds}
        )


@dataclass
class TrainingRun:
    net: Module
    optim: OptimState
    kind: str
    count: int
    batch_size: int
    epochs: int
    seed: int
    meta: dict = field(default_factory=dict)
    checkpoint_path: Path | None = None
    log: LossLog = field(default_factory=LossLog)
    start_epoch: int = 0


def _dump_path(run: TrainingRun) -> Path | None:
    if run.checkpoint_path is None:
        return None
    return run.checkpoint_path.with_suffix(".diverged.qmap")


def run_epochs(run: TrainingRun, batch_loss: BatchLoss, logger: logging.Logger) -> LossLog:
    """
    Shuffle, forward, backward and one Adam step per batch. Batch order and per-batch noise come
    from (seed, epoch[, batch]) streams, so a resumed run replays the remaining epochs exactly.
    """
    params = run.net.named_parameters()
    for epoch in range(run.start_epoch, run.epochs):
        started = time.perf_counter()
        losses = []
        order_rng = derive_rng(run.seed, epoch)
        for b, idx in enumerate(iter_batches(run.count, run.batch_size, order_rng)):
            run.net.zero_grad()
            loss = batch_loss(idx, derive_rng(run.seed, epoch, b, 1))
            value = loss.item()
            if not np.isfinite(value):
                dump = _dump_path(run)
                if dump is not None:
                    where = {"epoch": epoch, "batch": b, "batch_pairs": [int(i) for i in idx]}
                    save_checkpoint(dump, run.kind, run.net, run.optim, {**run.meta, **where})
                message = f"loss became {value} at epoch {epoch + 1}, batch {b}"
                raise TrainingDivergedError(message, str(dump) if dump else None)
            loss.backward()
            adam_step(params, {name: p.grad for name, p in params.items()}, run.optim)
            losses.append(value)

        elapsed = time.perf_counter() - started
        mean = float(np.mean(losses))
        run.log.epochs.append(mean)
        run.log.batches.extend(losses)
        run.log.seconds.append(elapsed)
        logger.info(f"Epoch {epoch + 1}/{run.epochs}: mean loss {mean:.6f} ({elapsed:.1f}s).")
        if run.checkpoint_path is not None:
            meta = {**run.meta, "epoch": epoch + 1, "loss_log": run.log.epochs}
            save_checkpoint(run.checkpoint_path, run.kind, run.net, run.optim, meta)
    run.net.zero_grad()
    return run.log
