import logging
from pathlib import Path

import pandas as pd

from qdiffusor.algos.training import LossLog
from qdiffusor.model import ChannelMetrics, RankCorrelation, RoiReport

log = logging.getLogger("qdiffusor.eval")


def _write(frame: pd.DataFrame, path: Path) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    frame.to_csv(path, index=False)
    log.info(f"Wrote {len(frame)} rows to {path}.")
    return path


def write_roi_report(report: RoiReport, out_dir: str | Path) -> tuple[Path, Path]:
    """report.csv (one row per region per method) and report_wide.csv (method comparison layout)."""
    out_dir = Path(out_dir)
    long_path = _write(report.to_frame(), out_dir / "report.csv")
    return long_path, _write(report.to_wide_frame(), out_dir / "report_wide.csv")


def metrics_frame(rows: list[tuple[str, int, dict[str, ChannelMetrics]]]) -> pd.DataFrame:
    records = [
        {"method": method, "pair": pair, "channel": channel, **m.to_dict()}
        for method, pair, metrics in rows
        for channel, m in metrics.items()
    ]
    return pd.DataFrame(records, columns=["method", "pair", "channel", "rmse", "mare", "bias"])


def correlation_frame(rows: list[tuple[str, int, RankCorrelation]]) -> pd.DataFrame:
    records = [
        {"method": method, "pair": pair, "rho": c.rho, "defined": c.defined, "voxels": c.voxels}
        for method, pair, c in rows
    ]
    return pd.DataFrame(records, columns=["method", "pair", "rho", "defined", "voxels"])


def write_frame(frame: pd.DataFrame, path: str | Path) -> Path:
    return _write(frame, Path(path))


def write_loss_log(loss_log: LossLog, path: str | Path) -> Path:
    return _write(loss_log.to_frame(), Path(path))


def read_loss_log(path: str | Path) -> LossLog:
    frame = pd.read_csv(path)
    return LossLog(epochs=frame["mean_loss"].tolist(), seconds=frame["seconds"].tolist())
