"""Guided visual attention toolkit: gaze heatmaps, spotlight manipulation,
a small numpy CNN with GradCAM, and the statistics used to compare them."""

from .raster import Raster, RgbImage, gaussian_filter, normalize_minmax, resample_bilinear

__version__ = "0.1.0"

__all__ = ["Raster", "RgbImage", "gaussian_filter", "normalize_minmax", "resample_bilinear"]
