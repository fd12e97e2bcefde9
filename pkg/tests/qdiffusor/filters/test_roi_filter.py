import numpy as np
import pytest

from qdiffusor.filters import filter_rois
from qdiffusor.model import QuantMap


@pytest.fixture
def labelled():
    labels = np.zeros((10, 10), dtype=int)
    labels[2:8, 2:8] = 1
    labels[0, 9] = 2
    channels = np.zeros((3, 10, 10))
    channels[:, labels == 1] = np.array([[0.485], [0.8], [1.9]])
    channels[:, labels == 2] = np.array([[1.884], [0.7], [1.9]])
    return labels, QuantMap.from_channels(channels, labels > 0)


def test_erosion_drops_edges_and_small_regions(labelled):
    labels, truth = labelled
    spec = filter_rois(labels, truth, names={1: "sphere_05"}, gt_std={1: 0.007})
    assert list(spec.regions) == ["sphere_05"]
    assert spec.regions["sphere_05"].sum() == 16
    assert spec.truth["sphere_05"].t1 == pytest.approx(0.485)
    assert spec.gt_std["sphere_05"] == pytest.approx(0.007)


def test_without_erosion_every_region_is_kept(labelled):
    labels, truth = labelled
    spec = filter_rois(labels, truth, erosion=0)
    assert list(spec.regions) == ["region_01", "region_02"]
    assert spec.regions["region_01"].sum() == 36
    assert spec.truth["region_02"].t1 == pytest.approx(1.884)
    assert spec.gt_std["region_02"] == 0.0


def test_minimum_region_size(labelled):
    labels, truth = labelled
    assert list(filter_rois(labels, truth, erosion=0, min_voxels=2).regions) == ["region_01"]
