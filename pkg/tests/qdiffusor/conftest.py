import numpy as np
import pytest

from qdiffusor.model import DatasetManifest, Protocol, QuantMap, TissueParams, TissueSpec
from qdiffusor.nn import Tensor, UNetConfig, precision
from qdiffusor.nn import functional as F
from qdiffusor.services.dataset import PairDataset


@pytest.fixture
def protocol():
    return Protocol()


@pytest.fixture
def disk_map():
    """8x8 map with a 4x4 foreground square at (t1=1.0, pd=0.8, b=1.9)."""
    mask = np.zeros((8, 8), dtype=bool)
    mask[2:6, 2:6] = True
    return QuantMap.constant((8, 8), TissueParams(1.0, 0.8, 1.9), mask)


@pytest.fixture
def tiny_manifest():
    """Two tissues on a 16x16 grid, four slices of two realisations."""
    tissues = (
        TissueSpec("outer", (1.2, 1.6), (0.7, 0.9), (1.85, 1.95)),
        TissueSpec("inner", (0.6, 0.9), (0.7, 0.9), (1.85, 1.95)),
    )
    return DatasetManifest(
        slices=4,
        realisations=2,
        shape=(16, 16),
        seed=7,
        tissues=tissues,
        snr=50.0,
        split_fractions={"train": 0.5, "val": 0.25, "test": 0.25},
    )


@pytest.fixture
def gradient_error():
    """
    Worst relative error between backward() and central differences over sampled entries of
    every input. Analytic gradients use `dtype`; the numerical ones always run in float64.
    """

    def check(op, arrays, dtype=np.float64, h=1e-6, samples=12, seed=0):
        rng = np.random.default_rng(seed)
        arrays = [np.asarray(a, dtype=np.float64) for a in arrays]
        with precision(dtype):
            leaves = [Tensor(a, requires_grad=True) for a in arrays]
            out = op(*leaves)
            weights = rng.standard_normal(out.shape)
            F.weighted_sum(out, weights).backward()
            analytic = [np.zeros_like(a) if leaf.grad is None else leaf.grad for a, leaf in zip(arrays, leaves)]

        def value(values):
            with precision(np.float64):
                return float(np.sum(op(*[Tensor(v) for v in values]).numpy() * weights))

        worst = 0.0
        for k, a in enumerate(arrays):
            picked = rng.choice(a.size, size=min(samples, a.size), replace=False)
            numeric, exact = [], []
            for j in picked:
                plus = [v.copy() for v in arrays]
                minus = [v.copy() for v in arrays]
                plus[k].flat[j] += h
                minus[k].flat[j] -= h
                numeric.append((value(plus) - value(minus)) / (2 * h))
                exact.append(float(analytic[k].flat[j]))
            numeric, exact = np.array(numeric), np.array(exact)
            scale = np.linalg.norm(numeric) + np.linalg.norm(exact)
            worst = max(worst, float(np.linalg.norm(numeric - exact) / max(scale, 1e-12)))
        return worst

    return check


@pytest.fixture
def tiny_unet():
    return UNetConfig(
        levels=1, channels_per_level=(8,), in_channels=10, out_channels=3, time_embed_dim=8, groupnorm_groups=4
    )


@pytest.fixture
def constant_pairs(protocol, disk_map):
    """Sixteen identical noiseless pairs of the 8x8 disk map."""
    return PairDataset.from_maps([disk_map] * 16, protocol)
