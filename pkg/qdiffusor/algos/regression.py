"""Direct weighted-images -> maps CNN, trained on the same pairs and scaling as the denoiser."""

import logging
from pathlib import Path

import numpy as np

from qdiffusor.algos.map_scaling import MapScaler, condition_mask, normalise_condition
from qdiffusor.algos.training import LossLog, TrainingRun, run_epochs
from qdiffusor.model import QuantMap, RegressionConfig, WeightedSeries
from qdiffusor.nn import OptimState, Tensor, no_grad
from qdiffusor.nn import functional as F
from qdiffusor.nn.layers import Conv2d, GroupNorm, Module, ResBlock
from qdiffusor.services.checkpoints import load_checkpoint
from qdiffusor.services.dataset import PairDataset
from qdiffusor.utils.errors import ShapeMismatchError

log = logging.getLogger("qdiffusor.regression")

CHECKPOINT_KIND = "regression"
MAP_CHANNELS = 3


class RegressionNet(Module):
    def __init__(self, cfg: RegressionConfig, in_channels: int, groups: int = 8):
        rng = np.random.default_rng(cfg.seed)
        self.cfg = cfg
        self.in_channels = in_channels
        self.pd_ref = 1.0
        self.conv_in = Conv2d(in_channels, cfg.channels, 3, rng)
        self.blocks = [ResBlock(cfg.channels, cfg.channels, rng, groups) for _ in range(cfg.blocks)]
        self.norm_out = GroupNorm(cfg.channels, groups)
        self.conv_out = Conv2d(cfg.channels, MAP_CHANNELS, 3, rng, zero_init=True)

    def forward(self, y: np.ndarray) -> Tensor:
        y = np.asarray(y)
        if y.ndim != 4 or y.shape[1] != self.in_channels:
            raise ShapeMismatchError(f"expected (B, {self.in_channels}, H, W) weighted images, got {y.shape}")
        h = self.conv_in(Tensor(y))
        for block in self.blocks:
            h = block(h)
        return self.conv_out(F.silu(self.norm_out(h)))


def train_regressor(
    dataset: PairDataset, cfg: RegressionConfig, checkpoint_path: str | Path | None = None
) -> tuple[RegressionNet, LossLog]:
    net = RegressionNet(cfg, len(dataset.protocol))
    net.pd_ref = MapScaler.fit(dataset.maps, dataset.masks).pd_ref
    x0 = MapScaler(net.pd_ref).forward(dataset.maps)
    cond, _ = normalise_condition(dataset.series)

    def batch_loss(idx: np.ndarray, rng: np.random.Generator):
        return F.mse_loss(net(cond[idx]), x0[idx])

    log.info(f"Training regression CNN ({net.parameter_count()} parameters) on {len(dataset)} pairs.")
    run = TrainingRun(
        net=net,
        optim=OptimState(learning_rate=cfg.learning_rate),
        kind=CHECKPOINT_KIND,
        count=len(dataset),
        batch_size=cfg.batch_size,
        epochs=cfg.epochs,
        seed=cfg.seed,
        meta={"regression": cfg.to_dict(), "in_channels": len(dataset.protocol)},
        checkpoint_path=Path(checkpoint_path) if checkpoint_path else None,
    )
    run_epochs(run, batch_loss, log)
    return net, run.log


def predict(series: WeightedSeries, net: RegressionNet, mask: np.ndarray | None = None) -> QuantMap:
    """Single deterministic forward pass, unscaled and clamped like a diffusion sample."""
    cond, _ = normalise_condition(series.images)
    with no_grad():
        scaled = net(cond[None]).numpy()[0].astype(np.float64)
    channels = MapScaler(net.pd_ref).inverse(scaled)
    mask = condition_mask(series.images) if mask is None else np.asarray(mask, dtype=bool)
    return QuantMap.from_channels(channels, mask)


def load_regressor(path: str | Path) -> RegressionNet:
    ckpt = load_checkpoint(path, CHECKPOINT_KIND)
    net = RegressionNet(RegressionConfig.from_dict(ckpt.meta["regression"]), int(ckpt.meta["in_channels"]))
    net.load_state_dict(ckpt.params)
    net.pd_ref = float(ckpt.meta["pd_ref"])
    return net
