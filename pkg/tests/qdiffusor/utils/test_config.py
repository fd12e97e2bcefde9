import json
import os

import pytest

from qdiffusor.nn import UNetConfig
from qdiffusor.utils.config import EnvConfig, RunConfig
from qdiffusor.utils.errors import ConfigError


@pytest.fixture
def clean_env(mocker):
    mocker.patch.dict(os.environ, {}, clear=True)


def test_defaults():
    cfg = RunConfig.load()
    assert cfg.seed == 0
    assert cfg.manifest.pair_count == 800
    assert len(cfg.protocol) == 7
    assert cfg.train.timesteps == 200
    assert cfg.unet == UNetConfig()
    assert cfg.sampling["repeats"] == 10
    assert cfg.paths["output"] == "out"


@pytest.mark.parametrize(
    "data, key",
    [
        ({"learning_rate": 1e-3}, "learning_rate"),
        ({"train": {"lr": 1e-3}}, "train.lr"),
        ({"train": {"dataset_path": "x.qmap"}}, "train.dataset_path"),
        ({"manifest": {"noise": {"sigma": 0.1}}}, "manifest.noise.sigma"),
        ({"manifest": {"tissues": [{"label": "a", "t1": 1.0}]}}, "manifest.tissues.0.t1"),
    ],
)
def test_unknown_keys_are_named(data, key):
    with pytest.raises(ConfigError) as err:
        RunConfig.from_dict(data)
    assert err.value.key == key


@pytest.mark.parametrize(
    "data, key",
    [
        ({"seed": "zero"}, "seed"),
        ({"sampling": {"repeats": 0}}, "sampling.repeats"),
        ({"eval": {"erosion": -1}}, "eval.erosion"),
        ({"fit": {"residual_tol": -1e-6}}, "fit"),
        ({"manifest": {"slices": 0}}, "manifest"),
        ({"unet": {"channels_per_level": [8]}}, "unet.channels_per_level"),
        ({"protocol": {"tis_seconds": [0.5, 0.1]}}, "protocol"),
    ],
)
def test_invalid_values_are_named(data, key):
    with pytest.raises(ConfigError) as err:
        RunConfig.from_dict(data)
    assert err.value.key == key


def test_seed_override_reaches_every_section():
    cfg = RunConfig.from_dict({"seed": 3}, seed=9)
    assert cfg.seed == 9
    assert cfg.manifest.seed == cfg.train.seed == cfg.regression.seed == 9


def test_nested_sections_merge_but_splits_are_replaced():
    cfg = RunConfig.from_dict({"manifest": {"slices": 4, "split": {"train": 0.5, "test": 0.5}}})
    assert cfg.manifest.slices == 4
    assert cfg.manifest.realisations == 4
    assert cfg.manifest.split_fractions == {"train": 0.5, "test": 0.5}


def test_load_file(tmp_path):
    path = tmp_path / "run.json"
    path.write_text(json.dumps({"train": {"epochs": 3}, "seed": 5}))
    cfg = RunConfig.load(path)
    assert cfg.train.epochs == 3
    assert cfg.train.batch_size == 8
    assert cfg.raw["seed"] == 5


def test_load_errors(tmp_path):
    with pytest.raises(ConfigError) as err:
        RunConfig.load(tmp_path / "missing.json")
    assert err.value.key.endswith("missing.json")
    bad = tmp_path / "bad.json"
    bad.write_text("{seed: 1")
    with pytest.raises(ConfigError):
        RunConfig.load(bad)
    bad.write_text("[1, 2]")
    with pytest.raises(ConfigError):
        RunConfig.load(bad)


def test_env_defaults(clean_env):
    env = EnvConfig()
    assert env.log_level is None
    assert env.threads == 1


def test_env_file(clean_env, tmp_path):
    path = tmp_path / ".env"
    path.write_text("QDIFFUSOR_LOG_LEVEL=DEBUG\nQDIFFUSOR_THREADS=3\n")
    env = EnvConfig(str(path))
    assert env.log_level == "DEBUG"
    assert env.threads == 3


@pytest.mark.parametrize("value", ["zero", "0", "-2"])
def test_env_threads_must_be_positive(clean_env, value):
    os.environ["QDIFFUSOR_THREADS"] = value
    with pytest.raises(ConfigError) as err:
        EnvConfig()
    assert err.value.key == "QDIFFUSOR_THREADS"


def test_missing_env_file(clean_env, tmp_path):
    with pytest.raises(ConfigError):
        EnvConfig(str(tmp_path / "absent.env"))
