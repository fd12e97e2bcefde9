import numpy as np
import pytest

from qdiffusor.algos.regression import RegressionNet
from qdiffusor.model import RegressionConfig
from qdiffusor.nn import OptimState, adam_step
from qdiffusor.services.checkpoints import load_checkpoint, save_checkpoint
from qdiffusor.utils.errors import ContainerError


@pytest.fixture
def trained(tmp_path):
    net = RegressionNet(RegressionConfig(blocks=1, channels=4), in_channels=7, groups=2)
    optim = OptimState(learning_rate=1e-3)
    params = net.named_parameters()
    adam_step(params, {name: np.ones_like(p.data) for name, p in params.items()}, optim)
    path = save_checkpoint(tmp_path / "net.qmap", "regression", net, optim, {"epoch": 3, "loss_log": [0.3, 0.2, 0.1]})
    return net, optim, path


def test_parameters_and_moments_survive(trained):
    net, optim, path = trained
    ckpt = load_checkpoint(path, "regression")
    state = net.state_dict()
    assert ckpt.params.keys() == state.keys()
    assert all(np.array_equal(ckpt.params[k], state[k]) for k in state)
    assert all(np.array_equal(ckpt.optim.m[k], optim.m[k]) for k in optim.m)
    assert ckpt.optim.step == 1
    assert ckpt.optim.learning_rate == pytest.approx(1e-3)


def test_training_progress_survives(trained):
    _, _, path = trained
    ckpt = load_checkpoint(path)
    assert ckpt.kind == "regression"
    assert ckpt.epoch == 3
    assert ckpt.loss_log == pytest.approx([0.3, 0.2, 0.1])
    assert ckpt.meta["pd_ref"] == 1.0


def test_kind_is_checked(trained):
    _, _, path = trained
    with pytest.raises(ContainerError):
        load_checkpoint(path, "ddpm")


def test_restored_network_matches(trained):
    net, _, path = trained
    fresh = RegressionNet(RegressionConfig(blocks=1, channels=4), in_channels=7, groups=2)
    fresh.load_state_dict(load_checkpoint(path).params)
    x = np.random.default_rng(0).uniform(size=(1, 7, 4, 4))
    np.testing.assert_array_equal(fresh(x).numpy(), net(x).numpy())
