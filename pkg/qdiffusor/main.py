import functools
import logging
import sys
from pathlib import Path

import click
import numpy as np

from qdiffusor.algos.ddpm_trainer import load_denoiser, train
from qdiffusor.algos.mle_fit import fit_map
from qdiffusor.algos.regression import load_regressor, predict, train_regressor
from qdiffusor.algos.uncertainty import (
    error_metrics,
    repeat_estimates,
    repeat_sample,
    roi_stats,
    uncertainty_error_correlation,
)
from qdiffusor.filters import filter_rois
from qdiffusor.model import RoiReport
from qdiffusor.services.container import read_header
from qdiffusor.services.dataset import PairDataset, load_dataset, realise_dataset
from qdiffusor.services.estimates import Estimates, load_estimates, save_estimates
from qdiffusor.services.png_export import export_map, export_uncertainty
from qdiffusor.services.reports import correlation_frame, metrics_frame, write_frame, write_loss_log, write_roi_report
from qdiffusor.utils import ConfigError, QdiffusorError, derive_seed
from qdiffusor.utils.config import EnvConfig, RunConfig

LOG_LEVELS = ["DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL", "FATAL"]
_SAMPLE_STREAM = 3
_REGRESSION_STREAM = 4

log = logging.getLogger("qdiffusor.cli")


def reports_errors(command):
    """Turn library and file errors into exit status 2 with one parseable stderr line."""

    @functools.wraps(command)
    def wrapper(*args, **kwargs):
        try:
            return command(*args, **kwargs)
        except (QdiffusorError, OSError) as err:
            key = getattr(err, "key", None) or getattr(err, "filename", None) or "-"
            msg = " ".join(str(err).split())
            log.debug("Command failed.", exc_info=True)
            click.echo(f"error kind={type(err).__name__} key={key} msg={msg}", err=True)
            sys.exit(2)

    return wrapper


def _resolve_level(option: str | None, env: EnvConfig) -> int:
    level = (option or env.log_level or "INFO").upper()
    if level not in LOG_LEVELS:
        raise ConfigError("QDIFFUSOR_LOG_LEVEL", f"unknown log level {level!r}, expected one of {LOG_LEVELS}")
    return getattr(logging, level)


def _selection(dataset: PairDataset, split: str, limit: int | None) -> np.ndarray:
    idx = dataset.indices(split)
    if limit is not None:
        idx = idx[:limit]
    if idx.size == 0:
        raise ConfigError("sampling.split", f"no pairs selected from split {split!r}")
    return idx


def _output(cfg: RunConfig, out: str | None, name: str) -> Path:
    return Path(out) if out else Path(cfg.paths["output"]) / name


def _parse_method(spec: str) -> tuple[str, Path]:
    name, sep, path = spec.partition("=")
    if not sep or not name or not path:
        raise ConfigError("--method", f"expected name=path, got {spec!r}")
    return name, Path(path)


@click.group()
@click.pass_context
@click.option("-c", "--config", default=None, help="Path to the JSON run configuration.")
@click.option("-s", "--seed", type=int, default=None, help="Override the configured seed.")
@click.option("-e", "--env-file", default=None, help="Path to a .env file with QDIFFUSOR_* settings.")
@click.option("-o", "--log-path", default="qdiffusor.log", help="Path to write log file.")
@click.option(
    "-v",
    "--log-level",
    type=click.Choice(LOG_LEVELS, case_sensitive=False),
    default=None,
    help="Set log level [default: QDIFFUSOR_LOG_LEVEL or INFO]",
)
@click.option("-t", "--device-threads", type=click.IntRange(min=1), default=None, help="Worker count.")
@reports_errors
def cli(
    ctx: click.Context,
    config: str,
    seed: int | None,
    env_file: str,
    log_path: str,
    log_level: str,
    device_threads: int | None,
):
    env = EnvConfig(env_file)

    logging.basicConfig(
        level=_resolve_level(log_level, env),
        format="%(asctime)s - %(name)s - %(levelname)s - %(message)s",
        handlers=[logging.FileHandler(log_path), logging.StreamHandler()],
    )

    ctx.ensure_object(dict)
    ctx.obj["env"] = env
    ctx.obj["cfg"] = RunConfig.load(config, seed)
    ctx.obj["threads"] = device_threads or env.threads


@cli.command()
@click.pass_context
@click.option("--out", default=None, help="Dataset container to write.")
@reports_errors
def gen_data(ctx: click.Context, out: str | None):
    """Generate the paired (maps, weighted series) dataset described by the manifest."""
    cfg: RunConfig = ctx.obj["cfg"]
    out = Path(out or cfg.paths["dataset"])
    dataset = realise_dataset(cfg.manifest, cfg.protocol, out, n_jobs=ctx.obj["threads"])
    counts = {tag: dataset.splits.count(tag) for tag in sorted(set(dataset.splits))}
    log.info(f"Wrote {len(dataset)} pairs to {out} (splits {counts}).")


@cli.command()
@click.pass_context
@click.option("--dataset", "dataset_path", default=None, help="Dataset container.")
@click.option("--split", default=None, help="Split to fit [default: sampling.split].")
@click.option("--limit", type=click.IntRange(min=1), default=None, help="Fit at most this many pairs.")
@click.option("--out", default=None, help="Estimates container to write.")
@reports_errors
def fit_mle(ctx: click.Context, dataset_path: str | None, split: str | None, limit: int | None, out: str | None):
    """Voxel-wise maximum likelihood fit of every selected series."""
    cfg: RunConfig = ctx.obj["cfg"]
    dataset = load_dataset(dataset_path or cfg.paths["dataset"])
    idx = _selection(dataset, split or cfg.sampling["split"], limit or cfg.sampling["limit"])

    maps, converged = [], []
    for i in idx:
        qmap, meta = fit_map(dataset.weighted(int(i)), cfg.fit, ctx.obj["threads"], float(dataset.sigma[i]))
        maps.append(qmap)
        converged.append(meta.converged)
    estimates = Estimates("mle", maps, [int(i) for i in idx], extra={"converged": np.stack(converged)})
    path = save_estimates(_output(cfg, out, "mle.qmap"), estimates)
    log.info(f"Wrote {len(maps)} MLE maps to {path}.")


@cli.command("train")
@click.pass_context
@click.option("--dataset", "dataset_path", default=None, help="Dataset container.")
@click.option("--checkpoint", default=None, help="Checkpoint to write (and resume from).")
@click.option("--resume", is_flag=True, help="Continue from the checkpoint if it exists.")
@reports_errors
def train_command(ctx: click.Context, dataset_path: str | None, checkpoint: str | None, resume: bool):
    """Train the conditional denoiser on the train split."""
    cfg: RunConfig = ctx.obj["cfg"]
    dataset = load_dataset(dataset_path or cfg.paths["dataset"], split="train")
    checkpoint = Path(checkpoint or cfg.paths["checkpoint"])
    _, loss_log = train(dataset, cfg.train, cfg.unet, checkpoint, resume=resume)
    write_loss_log(loss_log, checkpoint.with_suffix(".loss_log.csv"))


@cli.command()
@click.pass_context
@click.option("--dataset", "dataset_path", default=None, help="Dataset container.")
@click.option("--checkpoint", default=None, help="Trained denoiser checkpoint.")
@click.option("--split", default=None, help="Split to sample [default: sampling.split].")
@click.option("--limit", type=click.IntRange(min=1), default=None, help="Sample at most this many pairs.")
@click.option("--repeats", type=click.IntRange(min=1), default=None, help="Samples per pair [default: 10].")
@click.option("--out", default=None, help="Estimates container to write.")
@reports_errors
def sample(
    ctx: click.Context,
    dataset_path: str | None,
    checkpoint: str | None,
    split: str | None,
    limit: int | None,
    repeats: int | None,
    out: str | None,
):
    """Repeat posterior sampling per pair; writes the mean map and, for repeats > 1, the std map."""
    cfg: RunConfig = ctx.obj["cfg"]
    dataset = load_dataset(dataset_path or cfg.paths["dataset"])
    idx = _selection(dataset, split or cfg.sampling["split"], limit or cfg.sampling["limit"])
    net, sched = load_denoiser(checkpoint or cfg.paths["checkpoint"])
    repeats = repeats or cfg.sampling["repeats"]

    results = []
    for i in idx:
        base_seed = derive_seed(cfg.seed, _SAMPLE_STREAM, int(i))
        results.append(repeat_sample(dataset.weighted(int(i)), net, sched, repeats, base_seed, ctx.obj["threads"]))
        log.info(f"Sampled pair {int(i)} ({len(results)}/{len(idx)}).")
    std = np.stack([r.std_map for r in results]) if repeats > 1 else None
    maps = [r.mean_map for r in results]
    estimates = Estimates("diffusor", maps, [int(i) for i in idx], std, meta={"repeats": repeats})
    path = save_estimates(_output(cfg, out, "diffusor.qmap"), estimates)
    log.info(f"Wrote {len(results)} maps from {repeats} repeats each to {path}.")


@cli.command()
@click.pass_context
@click.option("--dataset", "dataset_path", default=None, help="Dataset container.")
@click.option("--checkpoint", default=None, help="Checkpoint to write.")
@reports_errors
def train_regression(ctx: click.Context, dataset_path: str | None, checkpoint: str | None):
    """Train the deterministic regression baseline on the train split."""
    cfg: RunConfig = ctx.obj["cfg"]
    dataset = load_dataset(dataset_path or cfg.paths["dataset"], split="train")
    checkpoint = Path(checkpoint or cfg.paths["regression_checkpoint"])
    _, loss_log = train_regressor(dataset, cfg.regression, checkpoint)
    write_loss_log(loss_log, checkpoint.with_suffix(".loss_log.csv"))


@cli.command()
@click.pass_context
@click.option("--dataset", "dataset_path", default=None, help="Dataset container.")
@click.option("--checkpoint", default=None, help="Trained regression checkpoint.")
@click.option("--split", default=None, help="Split to predict [default: sampling.split].")
@click.option("--limit", type=click.IntRange(min=1), default=None, help="Predict at most this many pairs.")
@click.option("--repeats", type=click.IntRange(min=1), default=1, show_default=True, help="Predictions per pair.")
@click.option("--out", default=None, help="Estimates container to write.")
@reports_errors
def predict_regression(
    ctx: click.Context,
    dataset_path: str | None,
    checkpoint: str | None,
    split: str | None,
    limit: int | None,
    repeats: int,
    out: str | None,
):
    """Single forward pass per pair. Repeats are supported so the spread can be compared with sampling."""
    cfg: RunConfig = ctx.obj["cfg"]
    dataset = load_dataset(dataset_path or cfg.paths["dataset"])
    idx = _selection(dataset, split or cfg.sampling["split"], limit or cfg.sampling["limit"])
    net = load_regressor(checkpoint or cfg.paths["regression_checkpoint"])

    results = []
    for i in idx:
        series = dataset.weighted(int(i))
        base_seed = derive_seed(cfg.seed, _REGRESSION_STREAM, int(i))
        results.append(repeat_estimates(lambda _: predict(series, net), repeats, base_seed, ctx.obj["threads"]))
    std = np.stack([r.std_map for r in results]) if repeats > 1 else None
    estimates = Estimates("regression", [r.mean_map for r in results], [int(i) for i in idx], std)
    path = save_estimates(_output(cfg, out, "regression.qmap"), estimates)
    log.info(f"Wrote {len(results)} regression maps to {path}.")


@cli.command("eval")
@click.pass_context
@click.option("--dataset", "dataset_path", default=None, help="Dataset container holding the ground truth.")
@click.option("-m", "--method", "methods", multiple=True, required=True, help="Estimates as name=path; repeatable.")
@click.option("--out", default=None, help="Directory for the CSV reports.")
@reports_errors
def evaluate(ctx: click.Context, dataset_path: str | None, methods: tuple[str, ...], out: str | None):
    """ROI table, masked error metrics and uncertainty/error correlation for every method."""
    cfg: RunConfig = ctx.obj["cfg"]
    dataset = load_dataset(dataset_path or cfg.paths["dataset"])
    out_dir = _output(cfg, out, "eval")
    erosion = cfg.eval["erosion"]

    report = RoiReport([])
    metric_rows, correlation_rows = [], []
    for spec in methods:
        name, path = _parse_method(spec)
        estimates = load_estimates(path)
        many = len(estimates) > 1
        for j, (estimate, pair) in enumerate(zip(estimates.maps, estimates.pair_index)):
            if not 0 <= pair < len(dataset):
                raise ConfigError(str(path), f"pair index {pair} outside dataset of {len(dataset)} pairs")
            truth = dataset.qmap(pair)
            labels = dataset.labels[pair]
            prefix = f"pair{pair:04d}/" if many else ""
            values = [int(v) for v in np.unique(labels) if v > 0]
            rois = filter_rois(
                labels,
                truth,
                names={v: f"{prefix}{dataset.region_name(v)}" for v in values},
                gt_std={v: dataset.region_std(v) for v in values},
                erosion=erosion,
            )
            report = report.merge(roi_stats(estimate, rois, name))
            metric_rows.append((name, pair, error_metrics(estimate, truth, truth.mask)))
            if estimates.std is not None:
                t1_error = estimate.t1_map - truth.t1_map
                correlation_rows.append(
                    (name, pair, uncertainty_error_correlation(estimates.std[j][0], t1_error, truth.mask))
                )
        log.info(f"Evaluated {len(estimates)} {name} maps from {path}.")

    write_roi_report(report, out_dir)
    write_frame(metrics_frame(metric_rows), out_dir / "metrics.csv")
    write_frame(correlation_frame(correlation_rows), out_dir / "uncertainty.csv")


@cli.command()
@click.pass_context
@click.argument("source")
@click.option("--limit", type=click.IntRange(min=1), default=None, help="Export at most this many maps.")
@click.option("--out", default=None, help="Directory for the PNG files.")
@reports_errors
def export_png(ctx: click.Context, source: str, limit: int | None, out: str | None):
    """Windowed grayscale PNGs of an estimates container, or of a dataset's ground truth."""
    cfg: RunConfig = ctx.obj["cfg"]
    out_dir = _output(cfg, out, "png")
    written = []
    if read_header(source).get("meta", {}).get("kind") == "dataset":
        dataset = load_dataset(source)
        for i in range(min(len(dataset), limit or len(dataset))):
            written += export_map(dataset.qmap(i), out_dir, f"truth_{i:04d}")
    else:
        estimates = load_estimates(source)
        count = min(len(estimates), limit or len(estimates))
        for j, (qmap, pair) in enumerate(zip(estimates.maps[:count], estimates.pair_index)):
            stem = f"{estimates.method}_{pair:04d}"
            written += export_map(qmap, out_dir, stem)
            if estimates.std is not None:
                written += export_uncertainty(estimates.std[j], qmap.mask, out_dir, stem)
    log.info(f"Wrote {len(written)} images to {out_dir}.")


if __name__ == "__main__":
    cli(obj={})
