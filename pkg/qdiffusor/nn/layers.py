import math

import numpy as np

from qdiffusor.nn import functional as F
from qdiffusor.nn.autograd import Tensor, default_dtype, parameter
from qdiffusor.utils.errors import ShapeMismatchError


class Module:
    """Container of named parameters and sub-modules, walked in attribute definition order."""

    def __call__(self, *args, **kwargs):
        return self.forward(*args, **kwargs)

    def forward(self, *args, **kwargs):
        raise NotImplementedError

    def named_parameters(self, prefix: str = "") -> dict[str, Tensor]:
        params = {}
        for name, value in vars(self).items():
            key = f"{prefix}{name}"
            if isinstance(value, Tensor) and value.requires_grad:
                params[key] = value
            elif isinstance(value, Module):
                params.update(value.named_parameters(f"{key}."))
            elif isinstance(value, list):
                for i, item in enumerate(value):
                    if isinstance(item, Module):
                        params.update(item.named_parameters(f"{key}.{i}."))
        return params

    def parameter_count(self) -> int:
        return sum(p.data.size for p in self.named_parameters().values())

    def zero_grad(self):
        for p in self.named_parameters().values():
            p.zero_grad()

    def state_dict(self) -> dict[str, np.ndarray]:
        return {name: p.data.copy() for name, p in self.named_parameters().items()}

    def load_state_dict(self, state: dict[str, np.ndarray]):
        params = self.named_parameters()
        missing = set(params) - set(state)
        unexpected = set(state) - set(params)
        if missing or unexpected:
            raise ShapeMismatchError(f"state mismatch: missing {sorted(missing)}, unexpected {sorted(unexpected)}")
        for name, p in params.items():
            if p.data.shape != tuple(state[name].shape):
                raise ShapeMismatchError(f"{name}: stored shape {state[name].shape} != {p.data.shape}")
            p.data = np.asarray(state[name], dtype=p.data.dtype).copy()


def _kaiming_uniform(rng: np.random.Generator, shape: tuple[int, ...], fan_in: int) -> np.ndarray:
    bound = math.sqrt(6.0 / fan_in)
    return rng.uniform(-bound, bound, size=shape).astype(default_dtype())


def fit_groups(channels: int, groups: int) -> int:
    """Largest group count <= groups that divides channels."""
    groups = max(1, min(groups, channels))
    while channels % groups:
        groups -= 1
    return groups


class Conv2d(Module):
    def __init__(
        self,
        in_channels: int,
        out_channels: int,
        kernel_size: int,
        rng: np.random.Generator,
        stride: int = 1,
        padding: int | None = None,
        zero_init: bool = False,
    ):
        shape = (out_channels, in_channels, kernel_size, kernel_size)
        if zero_init:
            weight = np.zeros(shape, dtype=default_dtype())
        else:
            weight = _kaiming_uniform(rng, shape, in_channels * kernel_size * kernel_size)
        self.weight = parameter(weight)
        self.bias = parameter(np.zeros(out_channels, dtype=default_dtype()))
        self.stride = stride
        self.padding = kernel_size // 2 if padding is None else padding

    def forward(self, x: Tensor) -> Tensor:
        return F.conv2d(x, self.weight, self.bias, stride=self.stride, padding=self.padding)


class GroupNorm(Module):
    def __init__(self, channels: int, groups: int):
        self.groups = fit_groups(channels, groups)
        self.gamma = parameter(np.ones(channels, dtype=default_dtype()))
        self.beta = parameter(np.zeros(channels, dtype=default_dtype()))

    def forward(self, x: Tensor) -> Tensor:
        return F.group_norm(x, self.gamma, self.beta, self.groups)


class Linear(Module):
    def __init__(self, in_features: int, out_features: int, rng: np.random.Generator):
        self.weight = parameter(_kaiming_uniform(rng, (in_features, out_features), in_features))
        self.bias = parameter(np.zeros(out_features, dtype=default_dtype()))

    def forward(self, x: Tensor) -> Tensor:
        return F.linear(x, self.weight, self.bias)


class Downsample(Module):
    def __init__(self, channels: int, rng: np.random.Generator):
        self.conv = Conv2d(channels, channels, 3, rng, stride=2, padding=1)

    def forward(self, x: Tensor) -> Tensor:
        return F.strided_downsample(x, self.conv.weight, self.conv.bias)


class Upsample(Module):
    """Nearest-neighbour x2 followed by a 3x3 convolution."""

    def __init__(self, in_channels: int, out_channels: int, rng: np.random.Generator):
        self.conv = Conv2d(in_channels, out_channels, 3, rng)

    def forward(self, x: Tensor) -> Tensor:
        return self.conv(F.nearest_upsample(x, 2))


class ResBlock(Module):
    """
    GroupNorm -> SiLU -> conv, plus an optional projected time embedding, then
    GroupNorm -> SiLU -> conv, added to a (1x1-projected when needed) skip path.
    """

    def __init__(
        self,
        in_channels: int,
        out_channels: int,
        rng: np.random.Generator,
        groups: int = 8,
        time_dim: int | None = None,
    ):
        self.norm1 = GroupNorm(in_channels, groups)
        self.conv1 = Conv2d(in_channels, out_channels, 3, rng)
        self.time_proj = Linear(time_dim, out_channels, rng) if time_dim else None
        self.norm2 = GroupNorm(out_channels, groups)
        self.conv2 = Conv2d(out_channels, out_channels, 3, rng)
        self.skip = Conv2d(in_channels, out_channels, 1, rng) if in_channels != out_channels else None

    def forward(self, x: Tensor, temb: Tensor | None = None) -> Tensor:
        h = self.conv1(F.silu(self.norm1(x)))
        if self.time_proj is not None:
            if temb is None:
                raise ShapeMismatchError("time-conditioned block called without a time embedding")
            h = F.add_channel_bias(h, self.time_proj(F.silu(temb)))
        h = self.conv2(F.silu(self.norm2(h)))
        residual = x if self.skip is None else self.skip(x)
        return F.add(h, residual)
