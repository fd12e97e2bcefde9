"""Differentiable ops over NCHW tensors. Each op returns a Tensor that knows its own backward."""

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy.special import expit

from qdiffusor.nn.autograd import Tensor, as_tensor, result
from qdiffusor.utils.errors import ShapeMismatchError


def _windows(padded: np.ndarray, kh: int, kw: int, stride: int) -> np.ndarray:
    view = sliding_window_view(padded, (kh, kw), axis=(2, 3))
    return view[:, :, ::stride, ::stride]


def conv2d(x: Tensor, weight: Tensor, bias: Tensor | None = None, stride: int = 1, padding: int = 0) -> Tensor:
    """Cross-correlation of x (N, C, H, W) with weight (O, C, kh, kw)."""
    if x.ndim != 4 or weight.ndim != 4:
        raise ShapeMismatchError(f"conv2d expects 4-D input and weight, got {x.shape} and {weight.shape}")
    n, c, h, w = x.shape
    out_ch, in_ch, kh, kw = weight.shape
    if c != in_ch:
        raise ShapeMismatchError(f"conv2d input has {c} channels, weight expects {in_ch}")
    if h + 2 * padding < kh or w + 2 * padding < kw:
        raise ShapeMismatchError(f"kernel {kh}x{kw} larger than padded input {h}x{w} (padding {padding})")

    padded = np.pad(x.data, ((0, 0), (0, 0), (padding, padding), (padding, padding)))
    out = np.tensordot(_windows(padded, kh, kw, stride), weight.data, axes=([1, 4, 5], [1, 2, 3]))
    out = np.ascontiguousarray(out.transpose(0, 3, 1, 2))
    if bias is not None:
        out = out + bias.data[None, :, None, None]

    def backward(g: np.ndarray):
        grad_x = grad_w = grad_b = None
        if weight.requires_grad:
            grad_w = np.tensordot(g, _windows(padded, kh, kw, stride), axes=([0, 2, 3], [0, 2, 3]))
        if bias is not None and bias.requires_grad:
            grad_b = g.sum(axis=(0, 2, 3))
        if x.requires_grad:
            grad_padded = np.zeros_like(padded)
            ho, wo = g.shape[2:]
            for i in range(kh):
                for j in range(kw):
                    contrib = np.tensordot(g, weight.data[:, :, i, j], axes=([1], [0])).transpose(0, 3, 1, 2)
                    grad_padded[:, :, i : i + stride * ho : stride, j : j + stride * wo : stride] += contrib
            grad_x = grad_padded[:, :, padding : padding + h, padding : padding + w]
        return (grad_x, grad_w) if bias is None else (grad_x, grad_w, grad_b)

    parents = (x, weight) if bias is None else (x, weight, bias)
    return result(out, parents, backward, "conv2d")


def strided_downsample(x: Tensor, weight: Tensor, bias: Tensor | None = None) -> Tensor:
    """Halve the spatial size with a stride-2 convolution."""
    return conv2d(x, weight, bias, stride=2, padding=weight.shape[-1] // 2)


def group_norm(x: Tensor, gamma: Tensor, beta: Tensor, groups: int, eps: float = 1e-5) -> Tensor:
    n, c, h, w = x.shape
    if c % groups:
        raise ShapeMismatchError(f"{c} channels cannot be split into {groups} groups")
    grouped = x.data.reshape(n, groups, -1)
    mean = grouped.mean(axis=-1, keepdims=True)
    var = grouped.var(axis=-1, keepdims=True)
    inv_std = 1.0 / np.sqrt(var + eps)
    normed = ((grouped - mean) * inv_std).reshape(n, c, h, w)
    out = normed * gamma.data[None, :, None, None] + beta.data[None, :, None, None]

    def backward(g: np.ndarray):
        grad_gamma = (g * normed).sum(axis=(0, 2, 3))
        grad_beta = g.sum(axis=(0, 2, 3))
        d_normed = (g * gamma.data[None, :, None, None]).reshape(n, groups, -1)
        flat = normed.reshape(n, groups, -1)
        grad_x = inv_std * (
            d_normed - d_normed.mean(axis=-1, keepdims=True) - flat * (d_normed * flat).mean(axis=-1, keepdims=True)
        )
        return grad_x.reshape(n, c, h, w), grad_gamma, grad_beta

    return result(out, (x, gamma, beta), backward, "group_norm")


def silu(x: Tensor) -> Tensor:
    sig = expit(x.data)
    out = x.data * sig

    def backward(g: np.ndarray):
        return (g * sig * (1.0 + x.data * (1.0 - sig)),)

    return result(out, (x,), backward, "silu")


def linear(x: Tensor, weight: Tensor, bias: Tensor | None = None) -> Tensor:
    """x (N, in) @ weight (in, out) + bias."""
    if x.ndim != 2 or x.shape[1] != weight.shape[0]:
        raise ShapeMismatchError(f"linear input {x.shape} does not match weight {weight.shape}")
    out = x.data @ weight.data
    if bias is not None:
        out = out + bias.data

    def backward(g: np.ndarray):
        grads = (g @ weight.data.T, x.data.T @ g)
        return grads if bias is None else grads + (g.sum(axis=0),)

    parents = (x, weight) if bias is None else (x, weight, bias)
    return result(out, parents, backward, "linear")


def nearest_upsample(x: Tensor, factor: int = 2) -> Tensor:
    n, c, h, w = x.shape
    out = x.data.repeat(factor, axis=2).repeat(factor, axis=3)

    def backward(g: np.ndarray):
        return (g.reshape(n, c, h, factor, w, factor).sum(axis=(3, 5)),)

    return result(out, (x,), backward, "nearest_upsample")


def skip_concat(*xs: Tensor) -> Tensor:
    """Concatenate along the channel axis."""
    spatial = {t.shape[2:] for t in xs}
    if len(spatial) != 1 or any(t.shape[0] != xs[0].shape[0] for t in xs):
        raise ShapeMismatchError(f"skip_concat needs matching batch and spatial dims: {[t.shape for t in xs]}")
    sizes = [t.shape[1] for t in xs]
    out = np.concatenate([t.data for t in xs], axis=1)

    def backward(g: np.ndarray):
        return tuple(np.split(g, np.cumsum(sizes)[:-1], axis=1))

    return result(out, xs, backward, "skip_concat")


def add(a: Tensor, b: Tensor) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.shape != b.shape:
        raise ShapeMismatchError(f"add needs equal shapes, got {a.shape} and {b.shape}")

    def backward(g: np.ndarray):
        return g, g

    return result(a.data + b.data, (a, b), backward, "add")


def add_channel_bias(x: Tensor, bias: Tensor) -> Tensor:
    """Broadcast a per-sample channel vector (N, C) over the spatial axes of x (N, C, H, W)."""
    if bias.shape != x.shape[:2]:
        raise ShapeMismatchError(f"channel bias {bias.shape} does not match {x.shape[:2]}")

    def backward(g: np.ndarray):
        return g, g.sum(axis=(2, 3))

    return result(x.data + bias.data[:, :, None, None], (x, bias), backward, "add_channel_bias")


def mse_loss(prediction: Tensor, target: np.ndarray) -> Tensor:
    target = np.asarray(target, dtype=prediction.data.dtype)
    if target.shape != prediction.shape:
        raise ShapeMismatchError(f"loss target {target.shape} does not match prediction {prediction.shape}")
    diff = prediction.data - target
    out = np.mean(diff * diff)

    def backward(g: np.ndarray):
        return (g * 2.0 * diff / diff.size,)

    return result(out, (prediction,), backward, "mse_loss")


def weighted_sum(x: Tensor, weights: np.ndarray) -> Tensor:
    """Scalar sum(x * weights) with fixed weights; used by gradient checks."""
    weights = np.asarray(weights, dtype=x.data.dtype)

    def backward(g: np.ndarray):
        return (g * weights,)

    return result(np.sum(x.data * weights), (x,), backward, "weighted_sum")
