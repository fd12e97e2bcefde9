import numpy as np
import pytest

from qdiffusor.nn import Tensor, precision
from qdiffusor.nn import functional as F
from qdiffusor.utils.errors import ShapeMismatchError


@pytest.fixture
def rng():
    return np.random.default_rng(42)


def gradient_cases(rng):
    target = rng.standard_normal((2, 3, 4, 4))
    return {
        "conv2d": (
            lambda x, w, b: F.conv2d(x, w, b, padding=1),
            [rng.standard_normal((2, 3, 5, 5)), rng.standard_normal((4, 3, 3, 3)), rng.standard_normal(4)],
        ),
        "conv2d_stride2": (
            lambda x, w, b: F.strided_downsample(x, w, b),
            [rng.standard_normal((2, 3, 6, 6)), rng.standard_normal((4, 3, 3, 3)), rng.standard_normal(4)],
        ),
        "group_norm": (
            lambda x, g, b: F.group_norm(x, g, b, groups=2),
            [rng.standard_normal((2, 4, 3, 3)), rng.uniform(0.5, 1.5, 4), rng.standard_normal(4)],
        ),
        "silu": (F.silu, [rng.standard_normal((2, 3, 4, 4)) * 3]),
        "linear": (F.linear, [rng.standard_normal((5, 6)), rng.standard_normal((6, 3)), rng.standard_normal(3)]),
        "nearest_upsample": (F.nearest_upsample, [rng.standard_normal((2, 3, 3, 3))]),
        "skip_concat": (F.skip_concat, [rng.standard_normal((2, 3, 4, 4)), rng.standard_normal((2, 2, 4, 4))]),
        "add_channel_bias": (F.add_channel_bias, [rng.standard_normal((2, 3, 4, 4)), rng.standard_normal((2, 3))]),
        "mse_loss": (lambda p: F.mse_loss(p, target), [rng.standard_normal((2, 3, 4, 4))]),
    }


CASES = [
    "conv2d",
    "conv2d_stride2",
    "group_norm",
    "silu",
    "linear",
    "nearest_upsample",
    "skip_concat",
    "add_channel_bias",
    "mse_loss",
]


@pytest.mark.parametrize("name", CASES)
def test_gradients_match_finite_differences_in_float64(name, rng, gradient_error):
    op, arrays = gradient_cases(rng)[name]
    assert gradient_error(op, arrays, dtype=np.float64) < 1e-6


@pytest.mark.parametrize("name", CASES)
def test_gradients_match_finite_differences_in_float32(name, rng, gradient_error):
    op, arrays = gradient_cases(rng)[name]
    assert gradient_error(op, arrays, dtype=np.float32) < 1e-3


def test_one_by_one_identity_conv_returns_input(rng):
    x = rng.standard_normal((2, 3, 5, 5))
    with precision(np.float64):
        weight = Tensor(np.eye(3).reshape(3, 3, 1, 1))
        out = F.conv2d(Tensor(x), weight)
    np.testing.assert_allclose(out.numpy(), x)


def test_zero_weights_leave_only_bias(rng):
    x = Tensor(rng.standard_normal((1, 2, 4, 4)))
    out = F.conv2d(x, Tensor(np.zeros((3, 2, 3, 3))), Tensor([1.0, -2.0, 0.5]), padding=1)
    assert out.shape == (1, 3, 4, 4)
    np.testing.assert_array_equal(out.numpy()[0, :, 0, 0], np.float32([1.0, -2.0, 0.5]))


def test_strided_conv_halves_spatial_size(rng):
    out = F.strided_downsample(Tensor(rng.standard_normal((1, 2, 8, 8))), Tensor(rng.standard_normal((2, 2, 3, 3))))
    assert out.shape == (1, 2, 4, 4)


def test_conv_rejects_channel_mismatch(rng):
    with pytest.raises(ShapeMismatchError):
        F.conv2d(Tensor(rng.standard_normal((1, 2, 4, 4))), Tensor(rng.standard_normal((1, 3, 3, 3))))


def test_silu_at_zero():
    assert F.silu(Tensor([0.0])).numpy()[0] == 0.0


def test_group_norm_normalises_each_group(rng):
    with precision(np.float64):
        x = Tensor(rng.normal(3.0, 5.0, size=(2, 4, 6, 6)))
        out = F.group_norm(x, Tensor(np.ones(4)), Tensor(np.zeros(4)), groups=2).numpy()
    grouped = out.reshape(2, 2, -1)
    np.testing.assert_allclose(grouped.mean(axis=-1), 0.0, atol=1e-10)
    np.testing.assert_allclose(grouped.var(axis=-1), 1.0, rtol=1e-4)


def test_group_norm_rejects_indivisible_groups(rng):
    with pytest.raises(ShapeMismatchError):
        F.group_norm(Tensor(rng.standard_normal((1, 3, 2, 2))), Tensor(np.ones(3)), Tensor(np.zeros(3)), groups=2)


def test_skip_concat_stacks_channels(rng):
    out = F.skip_concat(Tensor(rng.standard_normal((2, 3, 4, 4))), Tensor(rng.standard_normal((2, 5, 4, 4))))
    assert out.shape == (2, 8, 4, 4)
    with pytest.raises(ShapeMismatchError):
        F.skip_concat(Tensor(np.zeros((2, 3, 4, 4))), Tensor(np.zeros((2, 3, 2, 2))))


def test_nearest_upsample_repeats_pixels():
    out = F.nearest_upsample(Tensor(np.arange(4.0).reshape(1, 1, 2, 2))).numpy()
    np.testing.assert_array_equal(out[0, 0], [[0, 0, 1, 1], [0, 0, 1, 1], [2, 2, 3, 3], [2, 2, 3, 3]])


def test_mse_loss_value_and_target_shape():
    assert F.mse_loss(Tensor([1.0, 3.0]), np.array([0.0, 1.0])).item() == pytest.approx(2.5)
    with pytest.raises(ShapeMismatchError):
        F.mse_loss(Tensor([1.0, 3.0]), np.zeros(3))
