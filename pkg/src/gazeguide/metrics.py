"""Agreement measures between saliency maps, gaze heatmaps and ROIs."""

from __future__ import annotations

import csv
import logging
import math
import os
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .raster import Raster, gaussian_filter, normalize_minmax

__all__ = [
    "UndefinedCorrelation",
    "DegenerateFDI",
    "SimilarityRecord",
    "pearson",
    "fisher_z",
    "build_roi",
    "face_detection_index",
    "similarity_time_course",
    "bootstrap_ci",
    "write_similarity_csv",
    "write_fdi_csv",
]

log = logging.getLogger(__name__)

Z_CLAMP = 1e-7
ROI_SIGMA = 5.0
ROI_WIDTH = 10.0


class UndefinedCorrelation(ValueError):
    """Pearson correlation with a zero-variance argument."""


class DegenerateFDI(ValueError):
    """All attention mass lies inside the ROI (FDI would be infinite)."""


@dataclass
class SimilarityRecord:
    image_id: str
    condition: str
    seed: int
    r: float
    z: float
    window: int | None = None


def pearson(a: Raster, b: Raster) -> float:
    if a.shape != b.shape:
        raise ValueError(f"raster shapes differ: {a.shape} vs {b.shape}")
    x = a.values.ravel() - a.values.mean()
    y = b.values.ravel() - b.values.mean()
    sxx, syy = float(x @ x), float(y @ y)
    if sxx <= 0.0 or syy <= 0.0:
        raise UndefinedCorrelation("correlation undefined: a raster has zero variance")
    r = float(x @ y) / math.sqrt(sxx * syy)
    return max(-1.0, min(1.0, r))


def fisher_z(r: float) -> float:
    """atanh(r) with r clamped to [-1 + 1e-7, 1 - 1e-7]."""
    if abs(r) > 1.0:
        raise ValueError(f"|r| must be <= 1, got {r}")
    return math.atanh(min(max(r, -1.0 + Z_CLAMP), 1.0 - Z_CLAMP))


def build_roi(rater_masks: Sequence[Raster], sigma: float = ROI_SIGMA,
              width: float = ROI_WIDTH) -> Raster:
    """Average rater masks, min-max normalize, then smooth (W=10, SD=5)."""
    if not rater_masks:
        raise ValueError("build_roi: no rater masks")
    shape = rater_masks[0].shape
    if any(m.shape != shape for m in rater_masks):
        raise ValueError("build_roi: rater masks differ in dimensions")
    mean = Raster(np.mean(np.stack([m.values for m in rater_masks]), axis=0))
    return gaussian_filter(normalize_minmax(mean), sigma, width)


def face_detection_index(smap: Raster, face_roi: Raster, area_normalized: bool = False) -> float:
    """Attention mass inside the ROI divided by the mass outside it.

    With ``area_normalized`` both masses are divided by the ROI's (soft)
    area inside and outside, giving a density ratio instead.
    """
    if smap.shape != face_roi.shape:
        raise ValueError("map and ROI differ in dimensions")
    m, roi = smap.values, face_roi.values
    if not roi.any():
        raise ValueError("face ROI is all zero")
    if not m.any():
        raise ValueError("attention map is all zero")
    inside = float(np.sum(m * roi))
    outside = float(np.sum(m * (1.0 - roi)))
    if area_normalized:
        inside /= float(roi.sum())
        out_area = float((1.0 - roi).sum())
        if out_area <= 0:
            raise DegenerateFDI("ROI covers the whole image")
        outside /= out_area
    if outside <= 0.0:
        raise DegenerateFDI("all attention lies inside the ROI")
    return inside / outside


def similarity_time_course(heatmap_set, saliency) -> list[float | None]:
    """Fisher-Z similarity per window; ``None`` where correlation is undefined.

    Accepts a ``HeatmapSet`` (or a plain list of window rasters) and a
    ``SaliencyMap`` (or a raster).
    """
    windows = getattr(heatmap_set, "windows", heatmap_set)
    saliency = getattr(saliency, "raster", saliency)
    out: list[float | None] = []
    for k, w in enumerate(windows):
        try:
            out.append(fisher_z(pearson(w, saliency)))
        except UndefinedCorrelation:
            log.debug("window %d: undefined correlation, recorded as missing", k)
            out.append(None)
    return out


def bootstrap_ci(values, resamples: int = 2000, level: float = 0.95, seed: int = 0):
    """Percentile bootstrap interval for the mean."""
    v = np.asarray(values, dtype=np.float64).ravel()
    if v.size == 0:
        raise ValueError("bootstrap_ci: no values")
    if v.size == 1 or np.all(v == v[0]):
        return float(v[0]), float(v[0])
    rng = np.random.default_rng(seed)
    means = v[rng.integers(0, v.size, size=(resamples, v.size))].mean(axis=1)
    alpha = (1.0 - level) / 2.0
    lo, hi = np.quantile(means, [alpha, 1.0 - alpha])
    return float(lo), float(hi)


def _fmt(v):
    return "" if v is None else f"{v:.10g}"


def write_similarity_csv(path: str | os.PathLike, records: Sequence[SimilarityRecord]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["image", "condition", "seed", "window", "r", "z"])
        for rec in records:
            w.writerow([rec.image_id, rec.condition, rec.seed,
                        "full" if rec.window is None else rec.window, _fmt(rec.r), _fmt(rec.z)])


def write_fdi_csv(path: str | os.PathLike, rows) -> None:
    """``rows``: iterables of (image, condition, seed, fdi or None, censored)."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["image", "condition", "seed", "fdi", "censored"])
        for image, condition, seed, fdi, censored in rows:
            w.writerow([image, condition, seed, _fmt(fdi), int(censored)])
