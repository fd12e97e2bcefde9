from dataclasses import dataclass

import numpy as np

from qdiffusor.nn import functional as F
from qdiffusor.nn.autograd import Tensor, default_dtype
from qdiffusor.nn.layers import Conv2d, Downsample, GroupNorm, Linear, Module, ResBlock, Upsample
from qdiffusor.utils.errors import ConfigError, ShapeMismatchError


@dataclass(frozen=True)
class UNetConfig:
    levels: int = 2
    channels_per_level: tuple[int, ...] = (32, 64)
    in_channels: int = 10
    out_channels: int = 3
    time_embed_dim: int = 64
    groupnorm_groups: int = 8
    blocks_per_level: int = 2

    def __post_init__(self):
        object.__setattr__(self, "channels_per_level", tuple(int(c) for c in self.channels_per_level))
        if self.levels < 1 or len(self.channels_per_level) != self.levels:
            raise ConfigError("unet.channels_per_level", f"needs exactly {self.levels} entries")
        if self.in_channels <= self.out_channels or self.out_channels <= 0:
            raise ConfigError("unet.in_channels", "must exceed out_channels (map + condition channels)")
        if self.time_embed_dim <= 0 or self.time_embed_dim % 2:
            raise ConfigError("unet.time_embed_dim", "must be a positive even number")
        if min(self.channels_per_level) < 1 or self.groupnorm_groups < 1 or self.blocks_per_level < 1:
            raise ConfigError("unet", "channels, groups and blocks per level must be >= 1")

    @property
    def condition_channels(self) -> int:
        return self.in_channels - self.out_channels

    def to_dict(self):
        return {
            "levels": self.levels,
            "channels_per_level": list(self.channels_per_level),
            "in_channels": self.in_channels,
            "out_channels": self.out_channels,
            "time_embed_dim": self.time_embed_dim,
            "groupnorm_groups": self.groupnorm_groups,
            "blocks_per_level": self.blocks_per_level,
        }

    @staticmethod
    def from_dict(data: dict):
        return UNetConfig(**{**data, "channels_per_level": tuple(data.get("channels_per_level", (32, 64)))})

    @staticmethod
    def full_scale():
        return UNetConfig(levels=3, channels_per_level=(128, 256, 256), in_channels=10, out_channels=3)


def time_embedding(t, dim: int) -> Tensor:
    """Sinusoidal embedding, sin/cos interleaved over geometric frequencies. Shape (len(t), dim)."""
    if dim <= 0 or dim % 2:
        raise ValueError(f"embedding dim must be positive and even, got {dim}")
    steps = np.atleast_1d(np.asarray(t, dtype=np.float64))
    if np.any(steps < 0):
        raise ValueError("time steps must be >= 0")
    half = dim // 2
    freqs = np.exp(-np.log(10000.0) * np.arange(half) / half)
    angles = steps[:, None] * freqs[None, :]
    emb = np.empty((steps.size, dim))
    emb[:, 0::2] = np.sin(angles)
    emb[:, 1::2] = np.cos(angles)
    return Tensor(emb)


class _Level(Module):
    def __init__(self, blocks: list[ResBlock], resample: Module | None):
        self.blocks = blocks
        self.resample = resample


class DenoiserNet(Module):
    """
    Time-conditioned U-Net predicting the injected noise from (x_t, y, t). The condition y is
    concatenated with x_t on the channel axis.
    """

    def __init__(self, cfg: UNetConfig, seed: int = 0):
        rng = np.random.default_rng(seed)
        self.cfg = cfg
        self.pd_ref = 1.0
        chans = cfg.channels_per_level
        groups = cfg.groupnorm_groups
        tdim = cfg.time_embed_dim

        self.time_fc1 = Linear(tdim, tdim, rng)
        self.time_fc2 = Linear(tdim, tdim, rng)
        self.conv_in = Conv2d(cfg.in_channels, chans[0], 3, rng)

        self.down = []
        prev = chans[0]
        for level, ch in enumerate(chans):
            blocks = []
            for _ in range(cfg.blocks_per_level):
                blocks.append(ResBlock(prev, ch, rng, groups, tdim))
                prev = ch
            resample = Downsample(ch, rng) if level < cfg.levels - 1 else None
            self.down.append(_Level(blocks, resample))

        self.mid = ResBlock(prev, prev, rng, groups, tdim)

        self.up = []
        for level in reversed(range(cfg.levels)):
            ch = chans[level]
            resample = Upsample(prev, ch, rng) if level < cfg.levels - 1 else None
            incoming = prev if resample is None else ch
            blocks = [ResBlock(incoming + ch, ch, rng, groups, tdim)]
            for _ in range(cfg.blocks_per_level - 1):
                blocks.append(ResBlock(ch, ch, rng, groups, tdim))
            self.up.append(_Level(blocks, resample))
            prev = ch

        self.norm_out = GroupNorm(chans[0], groups)
        self.conv_out = Conv2d(chans[0], cfg.out_channels, 3, rng, zero_init=True)

    def embed_time(self, t) -> Tensor:
        emb = time_embedding(t, self.cfg.time_embed_dim)
        return self.time_fc2(F.silu(self.time_fc1(emb)))

    def forward(self, x_t: np.ndarray, y: np.ndarray, t) -> Tensor:
        x_t = np.asarray(x_t, dtype=default_dtype())
        y = np.asarray(y, dtype=default_dtype())
        if x_t.shape[1] != self.cfg.out_channels or y.shape[1] != self.cfg.condition_channels:
            raise ShapeMismatchError(
                f"expected {self.cfg.out_channels} map and {self.cfg.condition_channels} condition channels, "
                f"got {x_t.shape[1]} and {y.shape[1]}"
            )
        if x_t.shape[0] != y.shape[0] or x_t.shape[2:] != y.shape[2:]:
            raise ShapeMismatchError(f"x_t {x_t.shape} and condition {y.shape} disagree")
        factor = 2 ** (self.cfg.levels - 1)
        if x_t.shape[2] % factor or x_t.shape[3] % factor:
            raise ShapeMismatchError(f"spatial size {x_t.shape[2:]} must be divisible by {factor}")
        steps = np.broadcast_to(np.asarray(t, dtype=np.float64), (x_t.shape[0],))

        temb = self.embed_time(steps)
        h = self.conv_in(F.skip_concat(Tensor(x_t), Tensor(y)))
        skips = []
        for level in self.down:
            for block in level.blocks:
                h = block(h, temb)
            skips.append(h)
            if level.resample is not None:
                h = level.resample(h)

        h = self.mid(h, temb)

        for level in self.up:
            if level.resample is not None:
                h = level.resample(h)
            h = F.skip_concat(h, skips.pop())
            for block in level.blocks:
                h = block(h, temb)

        return self.conv_out(F.silu(self.norm_out(h)))


def build_unet(cfg: UNetConfig, seed: int = 0) -> DenoiserNet:
    return DenoiserNet(cfg, seed)
