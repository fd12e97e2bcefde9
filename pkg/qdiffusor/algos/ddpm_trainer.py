import logging
from pathlib import Path

import numpy as np

from qdiffusor.algos.ddpm_schedule import NoiseSchedule, make_schedule, q_sample
from qdiffusor.algos.map_scaling import MapScaler, normalise_condition
from qdiffusor.algos.training import LossLog, TrainingRun, run_epochs
from qdiffusor.model import TrainConfig
from qdiffusor.nn import DenoiserNet, OptimState, UNetConfig, build_unet
from qdiffusor.nn import functional as F
from qdiffusor.services.checkpoints import load_checkpoint
from qdiffusor.services.dataset import PairDataset
from qdiffusor.utils.errors import ConfigError, ShapeMismatchError

log = logging.getLogger("qdiffusor.ddpm.train")

CHECKPOINT_KIND = "ddpm"


def prepare_pairs(dataset: PairDataset, scaler: MapScaler) -> tuple[np.ndarray, np.ndarray]:
    """Scaled target maps and normalised conditions, both (P, C, H, W)."""
    x0 = scaler.forward(dataset.maps)
    cond, _ = normalise_condition(dataset.series)
    return x0, cond


def check_compatible(dataset: PairDataset, cfg: UNetConfig):
    if cfg.condition_channels != len(dataset.protocol):
        raise ConfigError(
            "unet.in_channels",
            f"{cfg.condition_channels} condition channels for a {len(dataset.protocol)}-image protocol",
        )
    factor = 2 ** (cfg.levels - 1)
    if any(s % factor for s in dataset.shape):
        raise ShapeMismatchError(f"image shape {dataset.shape} must be divisible by {factor} for {cfg.levels} levels")


def denoising_loss(net: DenoiserNet, sched: NoiseSchedule, x0: np.ndarray, cond: np.ndarray):
    """Batch loss ||eps - eps_hat(x_t, y, t)||^2 with one uniform step and one noise draw per sample."""

    def batch_loss(idx: np.ndarray, rng: np.random.Generator):
        target = x0[idx]
        t = rng.integers(1, sched.T + 1, size=len(idx))
        eps = rng.standard_normal(target.shape)
        x_t = q_sample(target, t, eps, sched)
        return F.mse_loss(net(x_t, cond[idx], t), eps)

    return batch_loss


def train(
    dataset: PairDataset,
    cfg: TrainConfig,
    unet_cfg: UNetConfig,
    checkpoint_path: str | Path | None = None,
    resume: bool = False,
) -> tuple[DenoiserNet, LossLog]:
    checkpoint_path = Path(checkpoint_path) if checkpoint_path else None
    start_epoch = 0
    loss_log = LossLog()
    if resume and checkpoint_path is not None and checkpoint_path.exists():
        ckpt = load_checkpoint(checkpoint_path, CHECKPOINT_KIND)
        unet_cfg = UNetConfig.from_dict(ckpt.meta["unet"])
        net = build_unet(unet_cfg, cfg.seed)
        net.load_state_dict(ckpt.params)
        net.pd_ref = float(ckpt.meta["pd_ref"])
        optim = ckpt.optim
        start_epoch = ckpt.epoch
        loss_log = LossLog(epochs=ckpt.loss_log, seconds=[float("nan")] * len(ckpt.loss_log))
        log.info(f"Resuming from {checkpoint_path} at epoch {start_epoch}.")
    else:
        net = build_unet(unet_cfg, cfg.seed)
        net.pd_ref = MapScaler.fit(dataset.maps, dataset.masks).pd_ref
        optim = OptimState(learning_rate=cfg.learning_rate)

    check_compatible(dataset, unet_cfg)
    sched = make_schedule(cfg.timesteps)
    x0, cond = prepare_pairs(dataset, MapScaler(net.pd_ref))
    log.info(
        f"Training denoiser ({net.parameter_count()} parameters) on {len(dataset)} pairs, "
        f"T={sched.T}, batch {cfg.batch_size}, {cfg.epochs} epochs."
    )
    run = TrainingRun(
        net=net,
        optim=optim,
        kind=CHECKPOINT_KIND,
        count=len(dataset),
        batch_size=cfg.batch_size,
        epochs=cfg.epochs,
        seed=cfg.seed,
        meta={"unet": unet_cfg.to_dict(), "train": cfg.to_dict(), "timesteps": sched.T},
        checkpoint_path=checkpoint_path,
        log=loss_log,
        start_epoch=start_epoch,
    )
    run_epochs(run, denoising_loss(net, sched, x0, cond), log)
    return net, run.log


def load_denoiser(path: str | Path) -> tuple[DenoiserNet, NoiseSchedule]:
    ckpt = load_checkpoint(path, CHECKPOINT_KIND)
    net = build_unet(UNetConfig.from_dict(ckpt.meta["unet"]))
    net.load_state_dict(ckpt.params)
    net.pd_ref = float(ckpt.meta["pd_ref"])
    return net, make_schedule(int(ckpt.meta["timesteps"]))
