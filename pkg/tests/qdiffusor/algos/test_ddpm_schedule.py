import numpy as np
import pytest

from qdiffusor.algos.ddpm_schedule import make_schedule, q_sample
from qdiffusor.utils.errors import DomainError, ShapeMismatchError


def test_reference_schedule_endpoints():
    sched = make_schedule(1000)
    assert sched.T == 1000
    assert sched.beta[0] == pytest.approx(1e-4, abs=1e-15)
    assert sched.beta[-1] == pytest.approx(0.02, abs=1e-15)
    assert sched.alpha_bar[0] == pytest.approx(0.9999, abs=1e-15)


@pytest.mark.parametrize("T", [2, 50, 200, 1000])
def test_schedule_identities_are_exact(T):
    sched = make_schedule(T)
    np.testing.assert_array_equal(sched.alpha, 1.0 - sched.beta)
    np.testing.assert_array_equal(sched.alpha_bar[1:], sched.alpha_bar[:-1] * sched.alpha[1:])
    assert np.all(np.diff(sched.alpha_bar) < 0)
    assert sched.posterior_sigma[0] == 0.0


def test_short_schedule_still_destroys_the_signal():
    assert make_schedule(200).alpha_bar[-1] < 1e-3


def test_schedule_rejects_too_few_steps():
    with pytest.raises(DomainError):
        make_schedule(1)


def test_q_sample_reference_value():
    sched = make_schedule(10)
    # Overwrite one step so that alpha_bar is exactly 0.25.
    sched.alpha_bar[4] = 0.25
    assert q_sample(np.array([1.0]), 5, np.array([0.5]), sched)[0] == pytest.approx(0.933013, abs=1e-6)


def test_q_sample_without_corruption_returns_x0():
    sched = make_schedule(10)
    sched.alpha_bar[0] = 1.0
    x0 = np.random.default_rng(0).standard_normal((2, 3, 4, 4))
    np.testing.assert_allclose(q_sample(x0, 1, np.ones_like(x0), sched), x0)


def test_q_sample_broadcasts_per_sample_steps():
    sched = make_schedule(100)
    x0 = np.ones((3, 3, 2, 2))
    eps = np.zeros_like(x0)
    out = q_sample(x0, np.array([1, 50, 100]), eps, sched)
    for i, t in enumerate((1, 50, 100)):
        np.testing.assert_allclose(out[i], np.sqrt(sched.alpha_bar[t - 1]))


def test_q_sample_validates_inputs():
    sched = make_schedule(10)
    with pytest.raises(ShapeMismatchError):
        q_sample(np.zeros(3), 1, np.zeros(4), sched)
    with pytest.raises(DomainError):
        q_sample(np.zeros(3), 0, np.zeros(3), sched)
    with pytest.raises(DomainError):
        q_sample(np.zeros(3), 11, np.zeros(3), sched)


@pytest.mark.parametrize("t", [1, 10, 50, 120, 200])
def test_q_sample_variance_matches_schedule(t):
    sched = make_schedule(200)
    eps = np.random.default_rng(t).standard_normal(100_000)
    x_t = q_sample(np.full(eps.shape, 0.3), t, eps, sched)
    assert x_t.var() == pytest.approx(1.0 - sched.alpha_bar[t - 1], rel=0.02)
