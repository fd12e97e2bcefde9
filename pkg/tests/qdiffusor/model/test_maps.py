import numpy as np
import pytest

from qdiffusor.model import NoiseSpec, Protocol, QuantMap, TissueParams, WeightedSeries
from qdiffusor.model.protocol import NoiseKind
from qdiffusor.utils.errors import DomainError, ShapeMismatchError


def test_from_channels_zeroes_background(disk_map):
    channels = np.ones((3, 8, 8))
    qmap = QuantMap.from_channels(channels, disk_map.mask)
    assert qmap.t1_map[0, 0] == 0.0
    assert qmap.params_at(3, 3) == TissueParams(1.0, 1.0, 1.0)
    assert qmap.foreground_fraction() == pytest.approx(0.25)


def test_validate(disk_map):
    disk_map.validate()
    disk_map.t1_map[0, 0] = 1.0
    with pytest.raises(DomainError):
        disk_map.validate()


def test_map_shapes_must_agree():
    with pytest.raises(ShapeMismatchError):
        QuantMap(np.zeros((2, 2)), np.zeros((2, 2)), np.zeros((3, 2)), np.zeros((2, 2)))
    with pytest.raises(ShapeMismatchError):
        QuantMap.from_channels(np.zeros((2, 4, 4)), np.zeros((4, 4)))


def test_weighted_series_checks(protocol):
    WeightedSeries(np.zeros((7, 4, 4)), protocol)
    with pytest.raises(ShapeMismatchError):
        WeightedSeries(np.zeros((6, 4, 4)), protocol)
    with pytest.raises(DomainError):
        WeightedSeries(-np.ones((7, 4, 4)), protocol)


def test_protocol_validation():
    assert len(Protocol()) == 7
    assert Protocol.from_dict(Protocol((0.1, 0.4)).to_dict()).tis == (0.1, 0.4)
    for tis in ((), (0.0, 0.5), (0.5, 0.2)):
        with pytest.raises(DomainError):
            Protocol(tis)


def test_noise_level_from_snr():
    spec = NoiseSpec.for_snr(0.8, 50.0, "gaussian_magnitude", seed=3)
    assert spec.sigma == pytest.approx(0.016)
    assert spec.kind is NoiseKind.GAUSSIAN_MAGNITUDE
    with pytest.raises(DomainError):
        NoiseSpec(sigma=-1.0)
