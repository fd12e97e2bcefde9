import numpy as np
import pytest

from qdiffusor.model import TissueSpec
from qdiffusor.model.tissue import DEFAULT_TISSUES, NIST_SPHERE_T1_MS
from qdiffusor.services.phantoms import (
    Disk,
    check_layout,
    draw_tissues,
    make_brain_phantom,
    make_sphere_phantom,
    sphere_layout,
)
from qdiffusor.utils.errors import DomainError

SPHERE_T1 = [t / 1000.0 for t in NIST_SPHERE_T1_MS]


def test_sphere_phantom_carries_every_reference_value():
    qmap = make_sphere_phantom((64, 64), SPHERE_T1, pd=0.8, b=1.9, seed=0)
    np.testing.assert_allclose(sorted(np.unique(qmap.t1_map[qmap.mask])), sorted(SPHERE_T1))
    np.testing.assert_allclose(np.unique(qmap.pd_map[qmap.mask]), [0.8])
    np.testing.assert_allclose(np.unique(qmap.b_map[qmap.mask]), [1.9])
    assert np.all(qmap.channels()[:, ~qmap.mask] == 0)
    qmap.validate()


def test_sphere_layout_fits_without_overlap():
    disks = sphere_layout((64, 64), 14, seed=3)
    assert len(disks) == 14
    assert all(d.radius == 6 for d in disks)
    check_layout(disks, (64, 64))


def test_sphere_layout_rejects_overcrowding():
    with pytest.raises(DomainError):
        sphere_layout((8, 8), 100, seed=0)
    with pytest.raises(DomainError):
        sphere_layout((64, 64), 0, seed=0)


def test_layout_errors():
    with pytest.raises(DomainError):
        check_layout([Disk(10, 10, 4), Disk(12, 12, 4)], (32, 32))
    with pytest.raises(DomainError):
        check_layout([Disk(2, 2, 4)], (32, 32))
    with pytest.raises(DomainError):
        make_sphere_phantom((32, 32), [1.0, 0.5], 0.8, 1.9, seed=0, disks=[Disk(8, 8, 3)])


def test_brain_phantom_stays_in_tissue_ranges():
    qmap = make_brain_phantom((32, 32), DEFAULT_TISSUES, seed=1)
    t1 = qmap.t1_map[qmap.mask]
    assert qmap.foreground_fraction() >= 0.05
    assert t1.min() >= min(t.t1_range[0] for t in DEFAULT_TISSUES)
    assert t1.max() <= max(t.t1_range[1] for t in DEFAULT_TISSUES)
    assert np.unique(qmap.b_map[qmap.mask]).size == 1
    qmap.validate()


def test_brain_phantom_seeding():
    a = make_brain_phantom((32, 32), DEFAULT_TISSUES, seed=1)
    b = make_brain_phantom((32, 32), DEFAULT_TISSUES, seed=1)
    c = make_brain_phantom((32, 32), DEFAULT_TISSUES, seed=2)
    np.testing.assert_array_equal(a.channels(), b.channels())
    assert not np.array_equal(a.channels(), c.channels())


def test_single_full_field_tissue_is_constant():
    tissue = TissueSpec("only", (1.0, 1.2), (0.7, 0.9), (1.85, 1.95))
    qmap = make_brain_phantom((16, 16), (tissue,), seed=4, full_field=True)
    assert qmap.mask.all()
    assert np.unique(qmap.t1_map).size == 1


def test_b_variation_is_smooth_but_not_constant():
    qmap = make_brain_phantom((32, 32), DEFAULT_TISSUES, seed=5, b_variation=True)
    b = qmap.b_map[qmap.mask]
    assert np.unique(b).size > 1
    assert b.min() >= 0.0 and b.max() <= 2.0


def test_tissue_draws_stay_in_range():
    rng = np.random.default_rng(11)
    for _ in range(200):
        for spec, params in zip(DEFAULT_TISSUES, draw_tissues(DEFAULT_TISSUES, rng)):
            assert spec.t1_range[0] <= params.t1 <= spec.t1_range[1]
            assert spec.pd_range[0] <= params.pd <= spec.pd_range[1]
            assert DEFAULT_TISSUES[0].b_range[0] <= params.b <= DEFAULT_TISSUES[0].b_range[1]
