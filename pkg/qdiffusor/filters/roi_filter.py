import logging

import numpy as np
from scipy.ndimage import binary_erosion

from qdiffusor.model import QuantMap, RoiSpec, TissueParams

log = logging.getLogger("qdiffusor.eval")


def filter_rois(
    labels: np.ndarray,
    truth: QuantMap,
    names: dict[int, str] | None = None,
    gt_std: dict[int, float] | None = None,
    erosion: int = 1,
    min_voxels: int = 1,
) -> RoiSpec:
    """
    Regions from a generator label image, each eroded by `erosion` voxels to drop edge voxels.
    Regions that erode away (or fall under min_voxels) are skipped. Ground truth per region is
    the mean of the truth map over the kept voxels.
    """
    labels = np.asarray(labels).astype(np.int64)
    names = names or {}
    gt_std = gt_std or {}
    regions, params, stds = {}, {}, {}
    for value in np.unique(labels):
        if value <= 0:
            continue
        region = labels == value
        if erosion > 0:
            region = binary_erosion(region, iterations=erosion)
        name = names.get(int(value), f"region_{int(value):02d}")
        if region.sum() < min_voxels:
            log.warning(f"ROI {name} has fewer than {min_voxels} voxels after {erosion}-voxel erosion, skipped.")
            continue
        regions[name] = region
        params[name] = TissueParams(
            float(truth.t1_map[region].mean()), float(truth.pd_map[region].mean()), float(truth.b_map[region].mean())
        )
        stds[name] = float(gt_std.get(int(value), 0.0))
    return RoiSpec(regions, params, stds)
