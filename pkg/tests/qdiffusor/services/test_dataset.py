import dataclasses
import json

import numpy as np
import pytest

from qdiffusor.algos.signal_model import ir_signal
from qdiffusor.model import DatasetManifest
from qdiffusor.services.container import write_container
from qdiffusor.services.dataset import iter_batches, load_dataset, realise_dataset, save_dataset
from qdiffusor.utils.errors import ContainerError, DomainError


def test_pair_counts():
    assert DatasetManifest().pair_count == 800
    assert DatasetManifest(slices=994, realisations=4).pair_count == 3976


def test_noiseless_series_follow_the_signal_model(tiny_manifest, protocol):
    dataset = realise_dataset(dataclasses.replace(tiny_manifest, snr=None), protocol)
    assert len(dataset) == 8
    assert dataset.series.shape == (8, 7, 16, 16)
    np.testing.assert_array_equal(dataset.sigma, 0.0)
    for i in (0, 5):
        t1, pd, b = dataset.maps[i]
        np.testing.assert_allclose(dataset.series[i], ir_signal(t1, pd, b, protocol.tis), rtol=1e-5, atol=1e-7)


def test_noisy_series_are_magnitudes(tiny_manifest, protocol):
    dataset = realise_dataset(tiny_manifest, protocol)
    assert np.all(dataset.series >= 0)
    expected = dataset.maps[:, 1].reshape(8, -1).max(axis=1) / 50.0
    np.testing.assert_allclose(dataset.sigma, expected, rtol=1e-5)


def test_generation_does_not_depend_on_workers(tiny_manifest, protocol):
    serial = realise_dataset(tiny_manifest, protocol, n_jobs=1)
    threaded = realise_dataset(tiny_manifest, protocol, n_jobs=2)
    np.testing.assert_array_equal(serial.maps, threaded.maps)
    np.testing.assert_array_equal(serial.series, threaded.series)


def test_realisations_share_geometry_and_split(tiny_manifest, protocol):
    dataset = realise_dataset(tiny_manifest, protocol)
    for s in range(tiny_manifest.slices):
        members = [i for i, idx in enumerate(dataset.slice_index) if idx == s]
        assert len(members) == 2
        assert len({dataset.splits[i] for i in members}) == 1
        np.testing.assert_array_equal(dataset.labels[members[0]], dataset.labels[members[1]])
        assert not np.array_equal(dataset.maps[members[0]], dataset.maps[members[1]])
    assert [len(dataset.indices(s)) for s in ("train", "val", "test")] == [4, 2, 2]


def test_sphere_geometry_labels_index_reference_values(protocol):
    manifest = DatasetManifest(slices=2, realisations=1, shape=(64, 64), geometry="spheres", snr=None, seed=3)
    dataset = realise_dataset(manifest, protocol)
    assert dataset.region_names[0] == "sphere_01"
    assert dataset.region_std(1) == pytest.approx(0.030)
    for label, t1 in enumerate(manifest.sphere_t1, start=1):
        np.testing.assert_allclose(dataset.maps[1, 0][dataset.labels[1] == label], t1, rtol=1e-6)


def test_save_and_load(tiny_manifest, protocol, tmp_path):
    dataset = realise_dataset(tiny_manifest, protocol, out=tmp_path / "data.qmap")
    loaded = load_dataset(tmp_path / "data.qmap")
    np.testing.assert_array_equal(loaded.maps, dataset.maps)
    np.testing.assert_array_equal(loaded.labels, dataset.labels)
    assert loaded.splits == dataset.splits
    assert loaded.region_names == ["outer", "inner"]
    assert loaded.manifest == tiny_manifest
    assert loaded.protocol == protocol
    sidecar = json.loads((tmp_path / "data.manifest.json").read_text())
    assert sidecar["pairs"] == 8
    assert len(load_dataset(tmp_path / "data.qmap", split="test")) == 2


def test_save_in_memory_dataset(constant_pairs, tmp_path):
    save_dataset(constant_pairs, tmp_path / "pairs.qmap")
    loaded = load_dataset(tmp_path / "pairs.qmap")
    assert loaded.manifest is None
    assert loaded.region_name(1) == "region_01"


def test_load_rejects_other_containers(tmp_path):
    write_container(tmp_path / "other.qmap", {"x": np.zeros(2)}, {"kind": "estimates"})
    with pytest.raises(ContainerError):
        load_dataset(tmp_path / "other.qmap")


def test_empty_selection(constant_pairs):
    with pytest.raises(DomainError):
        constant_pairs.select([])


def test_batches_cover_every_pair_once():
    batches = list(iter_batches(10, 4, np.random.default_rng(0)))
    assert [len(b) for b in batches] == [4, 4, 2]
    assert sorted(np.concatenate(batches).tolist()) == list(range(10))
