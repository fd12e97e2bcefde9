import pandas as pd
import pytest

from qdiffusor.algos.training import LossLog
from qdiffusor.model import ChannelMetrics, RankCorrelation, RoiReport, RoiRow
from qdiffusor.services.reports import (
    correlation_frame,
    metrics_frame,
    read_loss_log,
    write_frame,
    write_loss_log,
    write_roi_report,
)


def row(region, gt, method, mean, std):
    return RoiRow(region, gt, 7.0, method, mean, std, (mean - gt) / gt, 0.8, 0.01, 40)


@pytest.fixture
def report():
    return RoiReport(
        [
            row("sphere_05", 485.0, "mle", 503.0, 21.0),
            row("sphere_05", 485.0, "diffusor", 490.0, 12.0),
            row("sphere_09", 121.0, "mle", 140.0, 15.0),
            row("sphere_09", 121.0, "diffusor", 125.0, 9.0),
        ]
    )


def test_roi_report_files(report, tmp_path):
    long_path, wide_path = write_roi_report(report, tmp_path / "eval")
    long = pd.read_csv(long_path)
    assert len(long) == 4
    assert long["in_vivo_range"].tolist() == [True, True, False, False]
    wide = pd.read_csv(wide_path)
    assert list(wide.columns) == ["region", "GT", "diffusor", "mle"]
    assert wide["region"].tolist() == ["sphere_05", "sphere_09"]
    assert wide.loc[0, "GT"] == "485 ± 7"
    assert wide.loc[0, "mle"] == "503 ± 21"


def test_metrics_and_correlation_frames(tmp_path):
    metrics = {"t1": ChannelMetrics(0.1, 0.05, -0.01), "pd": ChannelMetrics(0.02, 0.03, 0.0)}
    frame = metrics_frame([("mle", 3, metrics)])
    assert frame["channel"].tolist() == ["t1", "pd"]
    assert frame.loc[0, "rmse"] == pytest.approx(0.1)
    corr = correlation_frame([("diffusor", 3, RankCorrelation(0.4, True, 120))])
    path = write_frame(corr, tmp_path / "uncertainty.csv")
    assert pd.read_csv(path).loc[0, "voxels"] == 120


def test_loss_log_round_trip(tmp_path):
    path = write_loss_log(LossLog(epochs=[0.5, 0.25], seconds=[1.0, 1.5]), tmp_path / "loss.csv")
    loaded = read_loss_log(path)
    assert loaded.epochs == [0.5, 0.25]
    assert loaded.seconds == [1.0, 1.5]
