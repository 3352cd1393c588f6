"""Synthetic labeled scenes with object/face ROIs, and simulated gaze.

Twelve study categories mirror an animate/inanimate split: the six animate
ones carry a face motif (pale disc, two eyes, mouth) and come in pairs that
share body appearance, so within a pair only the face tells them apart.
Category indices >= 100 are procedurally styled and serve as a disjoint
pretraining set.
"""

from __future__ import annotations

import csv
import hashlib
import os
from dataclasses import dataclass, field

import numpy as np

from .gaze import SampleTable
from .metrics import build_roi
from .raster import Raster, RgbImage, write_ppm, write_rstr

__all__ = [
    "CATEGORY_NAMES",
    "CategoryStyle",
    "category_style",
    "SceneSpec",
    "RoiSet",
    "Scene",
    "GazeSimParams",
    "derive_seed",
    "random_scene_spec",
    "make_scene",
    "simulate_gaze",
    "simulate_participants",
    "write_scenes",
]

CATEGORY_NAMES = ["human", "dog", "cat", "bird", "fish", "snake",
                  "car", "train", "house", "bed", "flower", "ball"]
PRETRAIN_BASE = 100

PALETTE = {
    "red": (0.85, 0.20, 0.15),
    "green": (0.20, 0.70, 0.25),
    "blue": (0.20, 0.35, 0.85),
    "yellow": (0.90, 0.80, 0.20),
    "magenta": (0.80, 0.25, 0.70),
    "cyan": (0.20, 0.75, 0.80),
    "orange": (0.95, 0.55, 0.15),
    "brown": (0.55, 0.35, 0.20),
}
SHAPES = ("ellipse", "rect", "diamond")
TEXTURES = ("plain", "hstripe", "vstripe", "checker")
MOUTHS = ("smile", "frown", "flat")


@dataclass(frozen=True)
class CategoryStyle:
    name: str
    animate: bool
    shape: str
    texture: str
    body_colors: tuple
    eye_color: str | None = None
    mouth: str | None = None


_STUDY_STYLES = [
    CategoryStyle("human", True, "ellipse", "plain", ("orange", "brown"), "blue", "smile"),
    CategoryStyle("dog", True, "ellipse", "plain", ("orange", "brown"), "red", "frown"),
    CategoryStyle("cat", True, "rect", "hstripe", ("yellow", "brown"), "green", "smile"),
    CategoryStyle("bird", True, "rect", "hstripe", ("yellow", "brown"), "magenta", "flat"),
    CategoryStyle("fish", True, "diamond", "vstripe", ("cyan", "blue"), "yellow", "frown"),
    CategoryStyle("snake", True, "diamond", "vstripe", ("cyan", "blue"), "red", "smile"),
    CategoryStyle("car", False, "rect", "hstripe", ("red", "blue")),
    CategoryStyle("train", False, "rect", "vstripe", ("red", "blue")),
    CategoryStyle("house", False, "diamond", "checker", ("brown", "yellow")),
    CategoryStyle("bed", False, "ellipse", "checker", ("brown", "yellow")),
    CategoryStyle("flower", False, "ellipse", "plain", ("magenta", "red")),
    CategoryStyle("ball", False, "diamond", "plain", ("magenta", "red")),
]


def category_style(category: int) -> CategoryStyle:
    if 0 <= category < len(_STUDY_STYLES):
        return _STUDY_STYLES[category]
    if category < PRETRAIN_BASE:
        raise ValueError(f"unknown category {category}")
    # pretraining categories come in pairs that share a body style; animate
    # pairs differ only in the face, inanimate pairs only in the texture
    idx = category - PRETRAIN_BASE
    pair, member = divmod(idx, 2)
    rng = np.random.default_rng(derive_seed(0xC47E, pair))
    colors = list(PALETTE)
    animate = pair % 2 == 0
    body = tuple(rng.choice(colors, size=2, replace=False).tolist())
    shape = SHAPES[rng.integers(len(SHAPES))]
    if animate:
        eyes = rng.choice(colors, size=2, replace=False).tolist()
        mouths = rng.permutation(len(MOUTHS))[:2]
        return CategoryStyle(f"proto{idx}", True, shape, TEXTURES[rng.integers(len(TEXTURES))], body,
                             eyes[member], MOUTHS[mouths[member]])
    textures = rng.permutation(len(TEXTURES))[:2]
    return CategoryStyle(f"proto{idx}", False, shape, TEXTURES[textures[member]], body)


def derive_seed(seed: int, *keys) -> int:
    """Split a seed into a per-task seed: ``seed`` XOR a hash of the task keys."""
    h = hashlib.blake2b(repr(keys).encode("utf-8"), digest_size=8).digest()
    return (int(seed) ^ int.from_bytes(h, "little")) & 0x7FFF_FFFF_FFFF_FFFF


# --- scenes -------------------------------------------------------------------

@dataclass(frozen=True)
class SceneSpec:
    category: int
    image_size: int = 32
    center: tuple = (16.0, 16.0)   # (x, y) in pixels
    radius: float = 8.0
    body_color: str = "orange"
    face_radius: float = 3.5
    clutter: float = 0.5
    seed: int = 0


@dataclass
class RoiSet:
    image_id: str
    object_roi: Raster
    face_roi: Raster | None
    face_present: bool
    object_mask: np.ndarray = field(repr=False, default=None)
    face_mask: np.ndarray | None = field(repr=False, default=None)


@dataclass
class Scene:
    image_id: str
    image: RgbImage
    rois: RoiSet
    label: int
    spec: SceneSpec

    @property
    def animate(self) -> bool:
        return category_style(self.spec.category).animate


def random_scene_spec(category: int, seed: int, image_size: int = 32,
                      min_center_offset: float | None = None) -> SceneSpec:
    """Draw object placement and colour for a category; the object centre
    sits at least ``min_center_offset`` px away from the image centre."""
    rng = np.random.default_rng(derive_seed(seed, "spec", category))
    style = category_style(category)
    s = image_size / 32.0
    radius = rng.uniform(7.0, 9.0) * s
    c = image_size / 2.0
    min_off = 5.0 * s if min_center_offset is None else min_center_offset
    lo, hi = radius + 1.0, image_size - radius - 1.0
    for _ in range(1000):
        cx, cy = rng.uniform(lo, hi, size=2)
        if np.hypot(cx - c, cy - c) >= min_off:
            break
    return SceneSpec(category, image_size, (float(cx), float(cy)), float(radius),
                     str(rng.choice(style.body_colors)), 3.5 * s, 0.5, int(seed))


def _shape_mask(shape: str, xx, yy, cx, cy, r):
    dx, dy = xx - cx, yy - cy
    if shape == "ellipse":
        return (dx / r) ** 2 + (dy / (0.85 * r)) ** 2 <= 1.0
    if shape == "rect":
        return (np.abs(dx) <= r) & (np.abs(dy) <= 0.8 * r)
    if shape == "diamond":
        return np.abs(dx) + np.abs(dy) <= 1.15 * r
    raise ValueError(f"unknown shape {shape!r}")


def _texture(texture: str, xx, yy, size: int):
    period = max(2, int(round(4 * size / 32)))
    if texture == "plain":
        return np.ones_like(xx)
    if texture == "hstripe":
        return np.where((np.floor(yy) // (period // 2)) % 2 == 0, 1.0, 0.45)
    if texture == "vstripe":
        return np.where((np.floor(xx) // (period // 2)) % 2 == 0, 1.0, 0.45)
    if texture == "checker":
        return np.where(((np.floor(xx) // (period // 2)) + (np.floor(yy) // (period // 2))) % 2 == 0, 1.0, 0.45)
    raise ValueError(f"unknown texture {texture!r}")


def _face_center(spec: SceneSpec):
    cx, cy = spec.center
    return cx, cy - 0.3 * spec.radius


def make_scene(spec: SceneSpec, image_id: str | None = None) -> Scene:
    """Render a scene deterministically from its spec."""
    size = spec.image_size
    style = category_style(spec.category)
    cx, cy = spec.center
    r = spec.radius
    if cx - r < 0 or cy - r < 0 or cx + r > size or cy + r > size:
        raise ValueError("object does not fit inside the image")
    rng = np.random.default_rng(derive_seed(spec.seed, "render", spec.category))
    yy, xx = np.mgrid[0:size, 0:size].astype(np.float64) + 0.5

    # background: grey base, smooth noise and a few category-independent blobs
    img = np.full((3, size, size), 0.5)
    img += spec.clutter * 0.12 * rng.standard_normal((3, size, size))
    n_blobs = int(round(6 * spec.clutter * (size / 32) ** 2))
    for _ in range(n_blobs):
        bx, by = rng.uniform(0, size, size=2)
        br = rng.uniform(1.0, 2.5) * size / 32
        col = np.array(PALETTE[str(rng.choice(list(PALETTE)))])
        m = (xx - bx) ** 2 + (yy - by) ** 2 <= br * br
        img[:, m] = 0.5 * img[:, m] + 0.5 * col[:, None]

    obj = _shape_mask(style.shape, xx, yy, cx, cy, r)
    body = np.array(PALETTE[spec.body_color])[:, None, None] * _texture(style.texture, xx, yy, size)
    body = body + 0.04 * rng.standard_normal((3, size, size))
    img = np.where(obj[None], body, img)

    face = None
    if style.animate:
        fx, fy = _face_center(spec)
        fr = spec.face_radius
        face = ((xx - fx) ** 2 + (yy - fy) ** 2 <= fr * fr) & obj
        if not face.any() or not np.all(face <= obj):
            raise ValueError("face region must lie inside the object")
        img[:, face] = 0.95
        eye_col = np.array(PALETTE[style.eye_color])[:, None]
        s = size / 32.0
        eye_dx, eye_dy, eye_r = 1.5 * s, -0.9 * s, 0.95 * s
        for sx in (-1, 1):
            m = ((xx - (fx + sx * eye_dx)) ** 2 + (yy - (fy + eye_dy)) ** 2 <= eye_r ** 2) & face
            img[:, m] = eye_col
        mouth_y = fy + 1.6 * s
        curve = {"smile": 0.6, "frown": -0.6, "flat": 0.0}[style.mouth] * s
        mx = xx - fx
        m = (np.abs(mx) <= 1.8 * s) & (np.abs(yy - (mouth_y + curve * (1 - (mx / (1.8 * s)) ** 2) - 0.3 * curve)) <= 0.55 * s) & face
        img[:, m] = 0.05

    image = RgbImage(np.clip(img, 0.0, 1.0))
    image_id = image_id or f"c{spec.category}_s{spec.seed}"
    obj_r = Raster(obj.astype(np.float64))
    roi_scale = size / 227.0
    obj_roi = build_roi([obj_r, obj_r], sigma=5.0 * roi_scale, width=max(1.0, 10.0 * roi_scale))
    face_roi = None
    if face is not None:
        face_r = Raster(face.astype(np.float64))
        face_roi = build_roi([face_r, face_r], sigma=5.0 * roi_scale, width=max(1.0, 10.0 * roi_scale))
    rois = RoiSet(image_id, obj_roi, face_roi, face is not None, obj, face)
    return Scene(image_id, image, rois, spec.category, spec)


# --- gaze ---------------------------------------------------------------------

@dataclass(frozen=True)
class GazeSimParams:
    """Gaze simulator settings; pixel sizes of ``None`` scale with the image."""

    latency_ms: int = 175
    central_sigma: float | None = None     # default 0.08 * image size
    face_bias: float = 0.6
    object_bias: float = 0.3
    object_spread: float = 0.45            # target spread around the object centre, in radii
    fixation_ms: float = 230.0
    fixation_jitter_ms: float = 60.0
    tremor_sd: float | None = None         # default 0.004 * image size
    sample_rate: int = 1000
    seed: int = 0

    def __post_init__(self):
        if self.latency_ms < 0:
            raise ValueError("latency_ms must be >= 0")
        if not (0 <= self.face_bias <= 1 and 0 <= self.object_bias <= 1):
            raise ValueError("biases must lie in [0, 1]")
        if self.face_bias + self.object_bias > 1 + 1e-12:
            raise ValueError("face_bias + object_bias must not exceed 1")
        if self.sample_rate != 1000:
            raise ValueError("only 1000 Hz sampling is supported")


def _pixel_centers(mask: np.ndarray):
    ys, xs = np.nonzero(mask)
    return np.column_stack([xs + 0.5, ys + 0.5])


def simulate_gaze(scene: Scene, roi_set: RoiSet | None = None, duration_ms: int = 1500,
                  params: GazeSimParams | None = None, participant: str = "p0") -> SampleTable:
    """Simulate one viewer's 1 kHz gaze over a scene.

    Before ``latency_ms`` the eye holds a single fixation near the image
    centre.  Afterwards fixations target the face ROI (``face_bias``), the
    rest of the object (``object_bias``, Gaussian around the object centre)
    or anywhere in the image.  Scenes without a face send the face share to
    the object.  Targets are pixel centres; the clipped tremor keeps each
    sample within its target pixel.
    """
    params = params or GazeSimParams()
    roi_set = roi_set or scene.rois
    size = scene.image.width
    central_sigma = params.central_sigma if params.central_sigma is not None else 0.08 * size
    tremor = params.tremor_sd if params.tremor_sd is not None else 0.004 * size
    tremor_clip = 3.0 * tremor
    rng = np.random.default_rng(derive_seed(params.seed, "gaze", scene.image_id, participant))
    n = max(0, int(duration_ms))
    t = np.arange(n, dtype=np.int64)
    xs = np.empty(n)
    ys = np.empty(n)
    c = size / 2.0

    pre = min(n, params.latency_ms)
    if pre:
        off = rng.normal(0.0, central_sigma, size=2)
        rad = np.hypot(*off)
        if rad > 2.5 * central_sigma:
            off *= 2.5 * central_sigma / rad
        xs[:pre] = c + off[0]
        ys[:pre] = c + off[1]

    face_px = _pixel_centers(roi_set.face_mask) if roi_set.face_present else np.zeros((0, 2))
    obj_mask = roi_set.object_mask
    if roi_set.face_present:
        obj_mask = obj_mask & ~roi_set.face_mask
    obj_px = _pixel_centers(obj_mask)
    ocx, ocy = scene.spec.center
    spread = params.object_spread * scene.spec.radius
    d2 = (obj_px[:, 0] - ocx) ** 2 + (obj_px[:, 1] - ocy) ** 2
    obj_w = np.exp(-d2 / (2 * spread * spread))
    obj_w /= obj_w.sum()
    p_face = params.face_bias if len(face_px) else 0.0
    p_obj = params.object_bias + (params.face_bias - p_face)

    pos = pre
    while pos < n:
        dur = int(max(80.0, rng.normal(params.fixation_ms, params.fixation_jitter_ms)))
        u = rng.random()
        if u < p_face:
            target = face_px[rng.integers(len(face_px))]
        elif u < p_face + p_obj:
            target = obj_px[rng.choice(len(obj_px), p=obj_w)]
        else:
            target = np.floor(rng.uniform(0, size, size=2)) + 0.5
        end = min(n, pos + dur)
        xs[pos:end] = target[0]
        ys[pos:end] = target[1]
        pos = end
    jitter = np.clip(rng.normal(0.0, tremor, size=(2, n)), -tremor_clip, tremor_clip)
    xs += jitter[0]
    ys += jitter[1]
    return SampleTable(np.full(n, participant), np.full(n, scene.image_id), t, xs, ys)


def simulate_participants(scene: Scene, n_participants: int, duration_ms: int = 1500,
                          params: GazeSimParams | None = None) -> SampleTable:
    return SampleTable.concat([simulate_gaze(scene, scene.rois, duration_ms, params, f"p{i:02d}")
                               for i in range(n_participants)])


def write_scenes(directory: str | os.PathLike, scenes, samples: SampleTable | None = None) -> None:
    """Scenes as PPM, ROIs as RSTR1, ``scenes_manifest.csv`` and gaze CSV."""
    from .gaze import write_fixation_csv

    os.makedirs(directory, exist_ok=True)
    with open(os.path.join(directory, "scenes_manifest.csv"), "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["image", "category", "animate", "face_present", "seed"])
        for sc in scenes:
            write_ppm(os.path.join(directory, f"{sc.image_id}.ppm"), sc.image)
            write_rstr(os.path.join(directory, f"{sc.image_id}_object.rstr"), sc.rois.object_roi)
            if sc.rois.face_present:
                write_rstr(os.path.join(directory, f"{sc.image_id}_face.rstr"), sc.rois.face_roi)
            w.writerow([sc.image_id, sc.label, int(sc.animate), int(sc.rois.face_present), sc.spec.seed])
    if samples is not None:
        write_fixation_csv(os.path.join(directory, "fixations.csv"), samples)
