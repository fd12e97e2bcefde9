from .roi_filter import filter_rois
