import math

import numpy as np
import pytest

from qdiffusor.algos.map_scaling import (
    MapScaler,
    clamp_physical,
    condition_mask,
    normalise_condition,
    scale_map,
    unscale_map,
)


def test_scale_map_reference_values():
    assert scale_map(np.array(0.0)) == -1.0
    assert scale_map(np.array(math.atanh(0.75))) == pytest.approx(0.5, abs=1e-12)


def test_scale_round_trip_on_physical_range():
    x = np.linspace(0.0, 4.0, 401)
    back, clamped = unscale_map(scale_map(x))
    assert not clamped.any()
    np.testing.assert_allclose(back, x, atol=1e-5)


def test_unscale_clamps_out_of_range_values():
    x, clamped = unscale_map(np.array([-1.5, 0.0, 1.2]))
    np.testing.assert_array_equal(clamped, [True, False, True])
    assert x[0] == 0.0
    assert np.isfinite(x).all()


def test_scaler_normalises_pd_only():
    channels = np.stack([np.full((2, 2), 1.2), np.full((2, 2), 3.0), np.full((2, 2), 1.9)])
    normed = MapScaler(pd_ref=2.0).normalise(channels)
    np.testing.assert_allclose(normed[0], 1.2)
    np.testing.assert_allclose(normed[1], 1.5)
    np.testing.assert_allclose(normed[2], 1.9)


def test_scaler_inverse_undoes_forward(disk_map):
    scaler = MapScaler(pd_ref=0.8)
    np.testing.assert_allclose(scaler.inverse(scaler.forward(disk_map.channels())), disk_map.channels(), atol=1e-5)


def test_scaler_fit_uses_foreground_percentile():
    maps = np.zeros((2, 3, 4, 4))
    maps[:, 1, :2] = 0.5
    masks = maps[:, 1] > 0
    assert MapScaler.fit(maps, masks).pd_ref == pytest.approx(0.5)
    assert MapScaler.fit(np.zeros((1, 3, 2, 2)), np.zeros((1, 2, 2), dtype=bool)).pd_ref == 1.0


def test_clamp_physical_bounds():
    channels = np.stack([np.full((1, 1), 20.0), np.full((1, 1), -0.1), np.full((1, 1), 2.5)])
    out = clamp_physical(channels)
    assert out[0, 0, 0] == 10.0
    assert out[1, 0, 0] == 0.0
    assert out[2, 0, 0] == 2.0


def test_condition_normalisation_is_per_sample():
    series = np.stack([np.ones((7, 4, 4)), 10 * np.ones((7, 4, 4))])
    normed, scale = normalise_condition(series)
    np.testing.assert_allclose(scale, [1.0, 10.0])
    np.testing.assert_allclose(normed, 1.0)
    single, _ = normalise_condition(series[1])
    np.testing.assert_allclose(single, normed[1])


def test_condition_mask_finds_signal(disk_map, protocol):
    from qdiffusor.algos.signal_model import synthesize

    mask = condition_mask(synthesize(disk_map, protocol).images)
    np.testing.assert_array_equal(mask, disk_map.mask)
