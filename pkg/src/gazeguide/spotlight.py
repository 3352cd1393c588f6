"""Human-Spotlight / Anti-Spotlight image manipulation.

HS keeps the regions people looked at sharp and blurs the rest; AS does the
inverse.  The threshold is a fraction of the normalized density range, and
the sharp/blurred seam is feathered by smoothing the binary keep mask.
"""

from __future__ import annotations

import csv
import enum
import os
from dataclasses import dataclass, field, replace
from typing import Mapping, Sequence

import numpy as np

from .raster import Raster, RgbImage, gaussian_filter, gaussian_filter_array, write_ppm

__all__ = [
    "Direction",
    "SpotlightConfig",
    "RatioDatasetSpec",
    "LabeledImage",
    "keep_mask",
    "apply_spotlight",
    "blur_fraction",
    "manipulated_count",
    "build_ratio_dataset",
    "write_manifest",
]


class Direction(str, enum.Enum):
    HS = "HS"
    AS = "AS"
    STD = "STD"


@dataclass(frozen=True)
class SpotlightConfig:
    direction: Direction = Direction.HS
    tau: float = 1 / 3
    blur_sigma: float = 7.0
    blur_width: float = 30.0
    taper_sigma: float = 9.0
    taper_width: float = 35.0

    def __post_init__(self):
        object.__setattr__(self, "direction", Direction(self.direction))
        if self.direction is Direction.STD:
            raise ValueError("spotlight direction must be HS or AS")
        if not 0 < self.tau < 1:
            raise ValueError(f"tau must lie in (0, 1), got {self.tau}")
        if self.blur_sigma <= 0 or self.taper_sigma <= 0:
            raise ValueError("sigmas must be positive")

    def scaled(self, factor: float) -> "SpotlightConfig":
        """Shrink the pixel parameters for images smaller than 227 px."""
        return replace(self, blur_sigma=self.blur_sigma * factor,
                       blur_width=max(1.0, self.blur_width * factor),
                       taper_sigma=self.taper_sigma * factor,
                       taper_width=max(1.0, self.taper_width * factor))


def keep_mask(heatmap: Raster, config: SpotlightConfig) -> Raster:
    """1 where the image stays sharp, 0 where it gets blurred.

    HS keeps ``density >= tau``; AS keeps ``density < tau``, so the two blur
    sets partition the pixels exactly.
    """
    if config.direction is Direction.HS:
        keep = heatmap.values >= config.tau
    else:
        keep = heatmap.values < config.tau
    return Raster(keep.astype(np.float64))


def apply_spotlight(image: RgbImage, heatmap: Raster, config: SpotlightConfig) -> RgbImage:
    if (heatmap.width, heatmap.height) != (image.width, image.height):
        raise ValueError(f"heatmap {heatmap.width}x{heatmap.height} does not match "
                         f"image {image.width}x{image.height}")
    keep = keep_mask(heatmap, config)
    if keep.values.all():
        return RgbImage(image.values.copy())
    blurred = gaussian_filter_array(image.values, config.blur_sigma, config.blur_width)
    m = np.clip(gaussian_filter(keep, config.taper_sigma, config.taper_width).values, 0.0, 1.0)
    out = m * image.values + (1.0 - m) * blurred
    return RgbImage(np.clip(out, 0.0, 1.0))


def blur_fraction(mask: Raster) -> float:
    """Fraction of pixels a binary keep mask marks for blurring."""
    return float(np.count_nonzero(mask.values == 0)) / mask.values.size


def manipulated_count(ratio: float, n: int) -> int:
    """``round(ratio * n)`` with halves rounded up."""
    return int(np.floor(ratio * n + 0.5 + 1e-9))


@dataclass
class LabeledImage:
    image_id: str
    category: int
    image: RgbImage
    manipulated: bool = False
    blur_fraction: float = 0.0


@dataclass
class RatioDatasetSpec:
    ratio: float
    direction: Direction
    images_by_category: Mapping[int, Sequence[str]]
    seed: int = 0
    config: SpotlightConfig | None = field(default=None)

    def __post_init__(self):
        self.direction = Direction(self.direction)
        if not 0.0 <= self.ratio <= 1.0:
            raise ValueError(f"ratio must lie in [0, 1], got {self.ratio}")


def build_ratio_dataset(images: Mapping[str, RgbImage], heatmaps: Mapping[str, Raster],
                        spec: RatioDatasetSpec) -> list[LabeledImage]:
    """Manipulate ``round(ratio * n)`` seeded-random images in every category.

    ``STD`` direction (or ratio 0) returns the originals.  Categories are
    visited in ascending order so the PRNG draws are reproducible.
    """
    rng = np.random.default_rng(spec.seed)
    base = spec.config or SpotlightConfig()
    out: list[LabeledImage] = []
    for category in sorted(spec.images_by_category):
        ids = list(spec.images_by_category[category])
        if spec.direction is Direction.STD:
            chosen = set()
        else:
            k = manipulated_count(spec.ratio, len(ids))
            chosen = {ids[i] for i in rng.permutation(len(ids))[:k]}
        for image_id in ids:
            img = images[image_id]
            if image_id in chosen:
                if image_id not in heatmaps:
                    raise KeyError(f"no heatmap for image {image_id!r}")
                cfg = replace(base, direction=spec.direction)
                mask = keep_mask(heatmaps[image_id], cfg)
                out.append(LabeledImage(image_id, category, apply_spotlight(img, heatmaps[image_id], cfg),
                                        True, blur_fraction(mask)))
            else:
                out.append(LabeledImage(image_id, category, img))
    return out


MANIFEST_HEADER = ["image", "category", "direction", "ratio", "manipulated", "blur_fraction"]


def write_manifest(directory: str | os.PathLike, dataset: Sequence[LabeledImage],
                   direction: Direction | str, ratio: float) -> None:
    """Write manipulated images as PPM plus ``manifest.csv``."""
    os.makedirs(directory, exist_ok=True)
    direction = Direction(direction).value
    with open(os.path.join(directory, "manifest.csv"), "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(MANIFEST_HEADER)
        for item in dataset:
            write_ppm(os.path.join(directory, f"{item.image_id}.ppm"), item.image)
            w.writerow([item.image_id, item.category, direction, f"{ratio:.2f}",
                        int(item.manipulated), f"{item.blur_fraction:.6f}"])
