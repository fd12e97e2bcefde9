import copy
import json
import os
from dataclasses import dataclass, field
from pathlib import Path

from dotenv import load_dotenv

from qdiffusor.model import DatasetManifest, FitOptions, Protocol, RegressionConfig, TrainConfig
from qdiffusor.model.protocol import DEFAULT_SNR, DEFAULT_TIS_SECONDS
from qdiffusor.model.tissue import DEFAULT_TISSUES
from qdiffusor.nn import UNetConfig
from qdiffusor.utils.errors import ConfigError, QdiffusorError

# Every accepted key with its default. Keys absent here are rejected.
DEFAULTS = {
    "seed": 0,
    "protocol": {"tis_seconds": list(DEFAULT_TIS_SECONDS)},
    "manifest": {
        "slices": 200,
        "realisations": 4,
        "shape": [64, 64],
        "geometry": "brain",
        "noise": {"kind": "rician", "snr": DEFAULT_SNR},
        "tissues": [t.to_dict() for t in DEFAULT_TISSUES],
        "sphere_t1_seconds": list(DatasetManifest().sphere_t1),
        "sphere_t1_std_seconds": list(DatasetManifest().sphere_t1_std),
        "sphere_pd_range": [0.6, 1.0],
        "sphere_b_range": [1.8, 2.0],
        "split": {"train": 0.8, "val": 0.1, "test": 0.1},
        "b_spatial_variation": False,
    },
    "fit": {
        "t1_grid": {"lo": 0.05, "hi": 5.0, "n": 40},
        "b_grid": [1.6, 1.7, 1.8, 1.9, 2.0],
        "max_iters": 100,
        "tol": 1e-12,
        "residual_tol": 1e-6,
        "bounds": {"t1": [0.01, 10.0], "pd": [0.0, 10.0], "b": [0.0, 2.0]},
    },
    "unet": UNetConfig().to_dict(),
    "train": {"batch_size": 8, "epochs": 100, "learning_rate": 1e-4, "timesteps": 200},
    "regression": {"blocks": 6, "channels": 64, "learning_rate": 1e-3, "epochs": 100, "batch_size": 8},
    "sampling": {"repeats": 10, "split": "test", "limit": None},
    "eval": {"erosion": 1},
    "paths": {
        "dataset": "dataset.qmap",
        "checkpoint": "ddpm.qmap",
        "regression_checkpoint": "regression.qmap",
        "output": "out",
    },
}

# Sections whose values are free-form mappings or lists of records.
_OPEN_KEYS = {"manifest.split"}
_RECORD_LISTS = {"manifest.tissues": {"label", "t1_range", "pd_range", "b_range"}}


def _check_keys(data, defaults, prefix: str = ""):
    if not isinstance(data, dict):
        raise ConfigError(prefix or "<root>", f"expected an object, got {type(data).__name__}")
    for key, value in data.items():
        dotted = f"{prefix}{key}"
        if key not in defaults:
            raise ConfigError(dotted, "unknown configuration key")
        if dotted in _RECORD_LISTS:
            if not isinstance(value, list):
                raise ConfigError(dotted, "expected a list")
            for i, record in enumerate(value):
                extra = set(record) - _RECORD_LISTS[dotted] if isinstance(record, dict) else {"<not an object>"}
                if extra:
                    raise ConfigError(f"{dotted}.{i}.{sorted(extra)[0]}", "unknown configuration key")
        elif isinstance(defaults[key], dict) and dotted not in _OPEN_KEYS:
            _check_keys(value, defaults[key], f"{dotted}.")


def _merge(base: dict, override: dict) -> dict:
    merged = copy.deepcopy(base)
    for key, value in override.items():
        if isinstance(value, dict) and isinstance(merged.get(key), dict) and key != "split":
            merged[key] = _merge(merged[key], value)
        else:
            merged[key] = value
    return merged


def _build(key: str, factory, *args):
    try:
        return factory(*args)
    except ConfigError:
        raise
    except (QdiffusorError, TypeError, ValueError, KeyError) as err:
        raise ConfigError(key, str(err)) from err


@dataclass
class RunConfig:
    """Validated run configuration; each section is already the domain object it configures."""

    seed: int
    protocol: Protocol
    manifest: DatasetManifest
    fit: FitOptions
    unet: UNetConfig
    train: TrainConfig
    regression: RegressionConfig
    sampling: dict
    eval: dict
    paths: dict
    raw: dict = field(default_factory=dict)

    @staticmethod
    def defaults() -> dict:
        return copy.deepcopy(DEFAULTS)

    @staticmethod
    def from_dict(data: dict, seed: int | None = None):
        _check_keys(data, DEFAULTS)
        raw = _merge(DEFAULTS, data)
        if seed is not None:
            raw["seed"] = seed
        if not isinstance(raw["seed"], int):
            raise ConfigError("seed", f"expected an integer, got {raw['seed']!r}")
        run_seed = raw["seed"]
        sampling, evaluation = raw["sampling"], raw["eval"]
        if not isinstance(sampling["repeats"], int) or sampling["repeats"] < 1:
            raise ConfigError("sampling.repeats", "must be an integer >= 1")
        if not isinstance(evaluation["erosion"], int) or evaluation["erosion"] < 0:
            raise ConfigError("eval.erosion", "must be an integer >= 0")
        return RunConfig(
            seed=run_seed,
            protocol=_build("protocol", Protocol.from_dict, raw["protocol"]),
            manifest=_build("manifest", DatasetManifest.from_dict, {**raw["manifest"], "seed": run_seed}),
            fit=_build("fit", FitOptions.from_dict, raw["fit"]),
            unet=_build("unet", UNetConfig.from_dict, raw["unet"]),
            train=_build("train", TrainConfig.from_dict, {**raw["train"], "seed": run_seed}),
            regression=_build("regression", RegressionConfig.from_dict, {**raw["regression"], "seed": run_seed}),
            sampling=sampling,
            eval=evaluation,
            paths=raw["paths"],
            raw=raw,
        )

    @staticmethod
    def load(path: str | Path | None = None, seed: int | None = None):
        """Defaults when path is None; a given path must exist and hold a JSON object."""
        if path is None:
            return RunConfig.from_dict({}, seed)
        path = Path(path)
        if not path.is_file():
            raise ConfigError(str(path), "configuration file not found")
        try:
            data = json.loads(path.read_text())
        except (UnicodeDecodeError, json.JSONDecodeError) as err:
            raise ConfigError(str(path), f"not valid JSON: {err}") from err
        return RunConfig.from_dict(data, seed)


class EnvConfig:
    """Process settings from the environment, optionally seeded from a .env file."""

    def __init__(self, dot_env_path: str | None = None):
        if not load_dotenv(dot_env_path) and dot_env_path is not None:
            raise ConfigError(dot_env_path, f"Unable to load environment file: {dot_env_path}")

        self.log_level = os.getenv("QDIFFUSOR_LOG_LEVEL")
        self.threads = self._positive_int("QDIFFUSOR_THREADS", os.getenv("QDIFFUSOR_THREADS"), 1)

    def _positive_int(self, key: str, val: str | None, default: int) -> int:
        if not self._has_value(val):
            return default
        try:
            number = int(val)
        except ValueError as err:
            raise ConfigError(key, f"expected an integer, got {val!r}") from err
        if number < 1:
            raise ConfigError(key, f"must be >= 1, got {number}")
        return number

    def _has_value(self, val: str | None):
        return bool(val and not val.isspace())
