import numpy as np
import pytest

from qdiffusor.algos.ddpm_sampler import reverse_step, sample, sample_scaled
from qdiffusor.algos.ddpm_schedule import make_schedule, q_sample
from qdiffusor.algos.signal_model import synthesize
from qdiffusor.model import Protocol, WeightedSeries
from qdiffusor.nn import build_unet
from qdiffusor.utils.errors import ShapeMismatchError


def test_oracle_noise_reverses_first_step():
    sched = make_schedule(200)
    rng = np.random.default_rng(0)
    x0 = rng.uniform(-1, 1, size=(2, 3, 8, 8))
    eps = rng.standard_normal(x0.shape)
    x1 = q_sample(x0, 1, eps, sched)
    recovered = reverse_step(x1, eps, 1, sched, noise=rng.standard_normal(x0.shape))
    np.testing.assert_allclose(recovered, x0, atol=1e-6)


def test_reverse_step_adds_scaled_noise_above_first_step():
    sched = make_schedule(50)
    x = np.zeros((1, 3, 2, 2))
    noise = np.ones_like(x)
    with_noise = reverse_step(x, np.zeros_like(x), 10, sched, noise)
    without = reverse_step(x, np.zeros_like(x), 10, sched)
    np.testing.assert_allclose(with_noise - without, sched.posterior_sigma[9])


def test_sample_scaled_is_seeded(tiny_unet):
    net = build_unet(tiny_unet, seed=1)
    sched = make_schedule(5)
    cond = np.random.default_rng(2).uniform(0, 1, size=(1, 7, 8, 8))
    a = sample_scaled(cond, net, sched, np.random.default_rng(3))
    b = sample_scaled(cond, net, sched, np.random.default_rng(3))
    assert a.shape == (1, 3, 8, 8)
    np.testing.assert_array_equal(a, b)


def test_sample_returns_physical_map(tiny_unet, protocol, disk_map):
    net = build_unet(tiny_unet, seed=1)
    sched = make_schedule(5)
    y = synthesize(disk_map, protocol)
    first = sample(y, net, sched, seed=1)
    second = sample(y, net, sched, seed=2)
    assert first.shape == disk_map.shape
    np.testing.assert_array_equal(first.mask, disk_map.mask)
    assert np.all(first.t1_map >= 0) and np.all(first.b_map <= 2)
    assert np.max(np.abs(first.channels() - second.channels())) > 0


def test_sample_rejects_protocol_mismatch(tiny_unet, disk_map):
    net = build_unet(tiny_unet)
    short = Protocol((0.1, 0.5, 1.0))
    y = WeightedSeries(np.ones((3, 8, 8)), short)
    with pytest.raises(ShapeMismatchError):
        sample(y, net, make_schedule(5), seed=0)
