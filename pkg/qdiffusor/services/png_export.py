"""
Grayscale PNG export with fixed value-to-intensity windows. The window of every image is recorded
in its PNG text metadata.
"""

import logging
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from qdiffusor.model import CHANNELS, QuantMap  # noqa: E402

log = logging.getLogger("qdiffusor.io")

WINDOWS = {"t1": (0.0, 3.0), "pd": (0.0, 1.2), "b": (0.0, 2.0)}
UNCERTAINTY_PERCENTILE = 99.0


def uncertainty_window(std: np.ndarray, mask: np.ndarray | None = None) -> tuple[float, float]:
    values = std[mask] if mask is not None and mask.any() else std.ravel()
    upper = float(np.percentile(values, UNCERTAINTY_PERCENTILE)) if values.size else 0.0
    return 0.0, upper if upper > 0 else 1.0


def save_png(path: str | Path, image: np.ndarray, window: tuple[float, float], description: str) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    lo, hi = window
    metadata = {"Description": description, "Comment": f"window=[{lo:g}, {hi:g}]"}
    image = np.asarray(image, dtype=np.float64)
    plt.imsave(path, image, vmin=lo, vmax=hi, cmap="gray", format="png", metadata=metadata)
    return path


def export_map(qmap: QuantMap, out_dir: str | Path, stem: str) -> list[Path]:
    out_dir = Path(out_dir)
    paths = []
    for name, image in zip(CHANNELS, qmap.channels()):
        paths.append(save_png(out_dir / f"{stem}_{name}.png", image, WINDOWS[name], f"{stem} {name}"))
    log.info(f"Exported {len(paths)} channel images for {stem} to {out_dir}.")
    return paths


def export_uncertainty(std_map: np.ndarray, mask: np.ndarray, out_dir: str | Path, stem: str) -> list[Path]:
    """One auto-windowed image per channel of a (3, H, W) standard deviation map."""
    out_dir = Path(out_dir)
    paths = []
    for name, image in zip(CHANNELS, std_map):
        window = uncertainty_window(image, mask)
        paths.append(save_png(out_dir / f"{stem}_{name}_std.png", image, window, f"{stem} {name} std"))
    return paths
