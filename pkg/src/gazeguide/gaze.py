"""Fixation samples -> per-image fixation density heatmaps.

Samples are kept column-wise in a :class:`SampleTable` since a desk-scale
study simulates millions of 1 kHz gaze samples; :class:`FixationSample` is
the row view used for small hand-built fixtures and CSV round trips.
"""

from __future__ import annotations

import csv
import os
from dataclasses import dataclass
from typing import Iterable, NamedTuple, Sequence

import numpy as np

from .raster import Raster, gaussian_filter, normalize_minmax, round_odd, write_rstr

__all__ = [
    "FixationSample",
    "SampleTable",
    "HeatmapSet",
    "in_bounds_clock",
    "bin_in_bounds",
    "count_map",
    "density_map",
    "post_latency_map",
    "average_heatmap",
    "window_heatmaps",
    "read_fixation_csv",
    "write_fixation_csv",
    "write_heatmap_set",
]

WINDOW_MS = 50
MAX_WINDOWS = 20
HEATMAP_SIGMA = 20.0


class FixationSample(NamedTuple):
    participant: str
    image: str
    t_ms: int
    x: float
    y: float


@dataclass
class SampleTable:
    """Column store of gaze samples (one row per millisecond per participant)."""

    participant: np.ndarray
    image: np.ndarray
    t_ms: np.ndarray
    x: np.ndarray
    y: np.ndarray

    def __post_init__(self):
        self.participant = np.asarray(self.participant).astype(str)
        self.image = np.asarray(self.image).astype(str)
        self.t_ms = np.asarray(self.t_ms, dtype=np.int64)
        self.x = np.asarray(self.x, dtype=np.float64)
        self.y = np.asarray(self.y, dtype=np.float64)
        n = self.t_ms.size
        if not all(a.size == n for a in (self.participant, self.image, self.x, self.y)):
            raise ValueError("sample columns differ in length")
        if n and self.t_ms.min() < 0:
            raise ValueError("t_ms must be >= 0")

    def __len__(self):
        return self.t_ms.size

    @classmethod
    def empty(cls) -> "SampleTable":
        return cls([], [], [], [], [])

    @classmethod
    def from_records(cls, records: Iterable[FixationSample]) -> "SampleTable":
        rows = list(records)
        if not rows:
            return cls.empty()
        p, im, t, x, y = zip(*rows)
        return cls(p, im, t, x, y)

    @classmethod
    def concat(cls, tables: Sequence["SampleTable"]) -> "SampleTable":
        tables = [t for t in tables if len(t)]
        if not tables:
            return cls.empty()
        return cls(*(np.concatenate([getattr(t, f) for t in tables])
                     for f in ("participant", "image", "t_ms", "x", "y")))

    def records(self) -> list[FixationSample]:
        return [FixationSample(str(p), str(i), int(t), float(x), float(y))
                for p, i, t, x, y in zip(self.participant, self.image, self.t_ms, self.x, self.y)]

    def select(self, mask: np.ndarray) -> "SampleTable":
        return SampleTable(self.participant[mask], self.image[mask], self.t_ms[mask],
                           self.x[mask], self.y[mask])

    def for_image(self, image_id: str) -> "SampleTable":
        return self.select(self.image == str(image_id))

    def image_ids(self) -> list[str]:
        return sorted(set(self.image.tolist()))

    def participants(self) -> list[str]:
        return sorted(set(self.participant.tolist()))


@dataclass
class HeatmapSet:
    image_id: str
    windows: list[Raster]
    full: Raster
    participants: int


def _as_table(samples) -> SampleTable:
    if isinstance(samples, SampleTable):
        return samples
    return SampleTable.from_records(samples)


def in_bounds_clock(samples, image_width: int, image_height: int):
    """Return ``(table, clock)`` for the in-bounds samples of a single image.

    ``clock`` is each retained sample's 0-based rank among the same
    participant's retained samples, ordered by ``t_ms``.
    """
    table = _as_table(samples)
    if len(table) and len(set(table.image.tolist())) > 1:
        raise ValueError("samples span several images; filter with SampleTable.for_image")
    keep = (table.x >= 0) & (table.x < image_width) & (table.y >= 0) & (table.y < image_height)
    kept = table.select(keep)
    if not len(kept):
        return kept, np.zeros(0, dtype=np.int64)
    order = np.lexsort((kept.t_ms, kept.participant))
    kept = kept.select(order)
    starts = np.r_[0, np.flatnonzero(kept.participant[1:] != kept.participant[:-1]) + 1]
    run_id = np.repeat(np.arange(starts.size), np.diff(np.r_[starts, len(kept)]))
    clock = np.arange(len(kept)) - starts[run_id]
    return kept, clock


def bin_in_bounds(samples, image_width: int, image_height: int,
                  window_ms: int = WINDOW_MS, max_windows: int = MAX_WINDOWS,
                  cumulative: bool = False) -> list[dict[str, np.ndarray]]:
    """Group in-bounds samples into consecutive windows of the in-bounds clock.

    Returns ``max_windows`` dicts mapping participant id to an ``(n, 2)``
    array of ``(x, y)`` points.  Samples past the last window are dropped.
    With ``cumulative=True`` window *k* holds everything from windows 0..k.
    """
    kept, clock = in_bounds_clock(samples, image_width, image_height)
    win = clock // window_ms
    windows: list[dict[str, np.ndarray]] = [{} for _ in range(max_windows)]
    for pid in sorted(set(kept.participant.tolist())):
        sel = kept.participant == pid
        w_p = win[sel]
        pts = np.column_stack([kept.x[sel], kept.y[sel]])
        for k in range(max_windows):
            m = (w_p <= k) if cumulative else (w_p == k)
            if m.any():
                windows[k][pid] = pts[m]
    return windows


def count_map(points, width: int, height: int) -> Raster:
    """Number of points per pixel (points must lie inside the raster)."""
    counts = np.zeros((height, width))
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 2)
    if pts.size:
        ix = np.floor(pts[:, 0]).astype(np.int64)
        iy = np.floor(pts[:, 1]).astype(np.int64)
        if ix.min() < 0 or iy.min() < 0 or ix.max() >= width or iy.max() >= height:
            raise ValueError("count_map: point outside the raster")
        np.add.at(counts, (iy, ix), 1.0)
    return Raster(counts)


def density_map(points, width: int, height: int, sigma: float = HEATMAP_SIGMA) -> Raster:
    """Count points per pixel, then smooth with a Gaussian of side 6*sigma+1.

    Not normalized: the interior mass equals the number of points.
    """
    return gaussian_filter(count_map(points, width, height), sigma, round_odd(6 * sigma + 1))


def post_latency_map(samples, image_width: int, image_height: int, latency_ms: int) -> Raster:
    """Unsmoothed count map of in-bounds samples at or after ``latency_ms``,
    pooled over participants (raw time stamps, not the in-bounds clock)."""
    t = _as_table(samples)
    ok = ((t.t_ms >= latency_ms) & (t.x >= 0) & (t.y >= 0)
          & (t.x < image_width) & (t.y < image_height))
    return count_map(np.column_stack([t.x[ok], t.y[ok]]), image_width, image_height)


def average_heatmap(per_participant: Sequence[Raster]) -> Raster:
    """Elementwise mean of participant maps, min-max normalized."""
    if not per_participant:
        raise ValueError("average_heatmap: no participant maps")
    shape = per_participant[0].shape
    if any(r.shape != shape for r in per_participant):
        raise ValueError("average_heatmap: participant maps differ in dimensions")
    mean = np.mean(np.stack([r.values for r in per_participant]), axis=0)
    return normalize_minmax(Raster(mean))


def window_heatmaps(samples, image_width: int, image_height: int, *,
                    image_id: str | None = None,
                    window_ms: int = WINDOW_MS, max_windows: int = MAX_WINDOWS,
                    sigma: float = HEATMAP_SIGMA, cumulative: bool = False) -> HeatmapSet:
    """Per-window and full-duration heatmaps for one image.

    The full-duration map uses every in-bounds sample of the presentation,
    including those past the windowed range.
    """
    table = _as_table(samples)
    if image_id is None:
        ids = table.image_ids()
        image_id = ids[0] if ids else ""
    else:
        table = table.for_image(image_id)
    kept, _ = in_bounds_clock(table, image_width, image_height)
    participants = table.participants()
    windows = bin_in_bounds(table, image_width, image_height, window_ms, max_windows, cumulative)
    zero = Raster.zeros(image_width, image_height)

    def averaged(points_by_pid):
        maps = [density_map(points_by_pid[p], image_width, image_height, sigma)
                if p in points_by_pid else zero for p in participants]
        return average_heatmap(maps) if maps else zero

    window_maps = [averaged(w) for w in windows]
    full_pts = {}
    for pid in participants:
        sel = kept.participant == pid
        if sel.any():
            full_pts[pid] = np.column_stack([kept.x[sel], kept.y[sel]])
    return HeatmapSet(str(image_id), window_maps, averaged(full_pts), len(participants))


# --- I/O ----------------------------------------------------------------------

FIXATION_HEADER = ["participant", "image", "t_ms", "x", "y"]


def write_fixation_csv(path: str | os.PathLike, samples) -> None:
    table = _as_table(samples)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(FIXATION_HEADER)
        for p, i, t, x, y in zip(table.participant, table.image, table.t_ms, table.x, table.y):
            w.writerow([p, i, int(t), repr(float(x)), repr(float(y))])


def read_fixation_csv(path: str | os.PathLike) -> SampleTable:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != FIXATION_HEADER:
            raise ValueError(f"{path}: expected header {','.join(FIXATION_HEADER)}")
        cols = list(zip(*reader))
    if not cols:
        return SampleTable.empty()
    p, i, t, x, y = cols
    return SampleTable(p, i, [int(v) for v in t], [float(v) for v in x], [float(v) for v in y])


def write_heatmap_set(directory: str | os.PathLike, hs: HeatmapSet) -> None:
    os.makedirs(directory, exist_ok=True)
    for k, r in enumerate(hs.windows):
        write_rstr(os.path.join(directory, f"{hs.image_id}_w{k}.rstr"), r)
    write_rstr(os.path.join(directory, f"{hs.image_id}_full.rstr"), hs.full)
