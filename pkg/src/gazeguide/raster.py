"""Dense 2-D rasters and RGB images, with the filtering and resampling
primitives shared by the rest of the package.

A :class:`Raster` is a thin wrapper around a 2-D float64 array indexed
``values[y, x]``; an :class:`RgbImage` wraps a ``(3, height, width)`` array
with intensities in [0, 1].  All operations here are pure.
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass

import numpy as np

__all__ = [
    "Raster",
    "RgbImage",
    "round_odd",
    "gaussian_kernel",
    "gaussian_filter",
    "gaussian_filter_array",
    "resample_bilinear",
    "normalize_minmax",
    "write_rstr",
    "read_rstr",
    "write_pgm",
    "write_ppm",
    "read_ppm",
]


@dataclass(frozen=True, eq=False)
class Raster:
    """Row-major grid of finite reals, ``values.shape == (height, width)``."""

    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        if v.ndim != 2 or v.shape[0] < 1 or v.shape[1] < 1:
            raise ValueError(f"raster must be a non-empty 2-D array, got shape {v.shape}")
        if not np.all(np.isfinite(v)):
            raise ValueError("raster contains non-finite values")
        object.__setattr__(self, "values", v)

    @property
    def width(self) -> int:
        return self.values.shape[1]

    @property
    def height(self) -> int:
        return self.values.shape[0]

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape

    @classmethod
    def zeros(cls, width: int, height: int) -> "Raster":
        return cls(np.zeros((height, width)))

    def __add__(self, other: "Raster") -> "Raster":
        return Raster(self.values + other.values)

    def __eq__(self, other):
        if not isinstance(other, Raster):
            return NotImplemented
        return self.shape == other.shape and bool(np.array_equal(self.values, other.values))

    def __repr__(self):
        return f"Raster({self.width}x{self.height})"


@dataclass(frozen=True, eq=False)
class RgbImage:
    """Three-channel image, ``values.shape == (3, height, width)``, in [0, 1]."""

    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        if v.ndim != 3 or v.shape[0] != 3:
            raise ValueError(f"RGB image must have shape (3, H, W), got {v.shape}")
        if not np.all(np.isfinite(v)) or v.min(initial=0.0) < 0.0 or v.max(initial=0.0) > 1.0:
            raise ValueError("RGB intensities must be finite and lie in [0, 1]")
        object.__setattr__(self, "values", v)

    @property
    def width(self) -> int:
        return self.values.shape[2]

    @property
    def height(self) -> int:
        return self.values.shape[1]

    def channel(self, c: int) -> Raster:
        return Raster(self.values[c])

    def __eq__(self, other):
        if not isinstance(other, RgbImage):
            return NotImplemented
        return bool(np.array_equal(self.values, other.values))

    def __repr__(self):
        return f"RgbImage({self.width}x{self.height})"


def round_odd(width: float) -> int:
    """Round a kernel width up to the nearest odd integer (30 -> 31, 4.2 -> 5)."""
    n = max(1, math.ceil(width - 1e-9))
    return n if n % 2 == 1 else n + 1


def gaussian_kernel(sigma: float, width: float) -> np.ndarray:
    """Sampled 1-D Gaussian of side ``round_odd(width)``, normalized to sum 1."""
    if not sigma > 0:
        raise ValueError(f"sigma must be positive, got {sigma}")
    if not width >= 1:
        raise ValueError(f"width must be >= 1, got {width}")
    n = round_odd(width)
    x = np.arange(n, dtype=np.float64) - (n // 2)
    k = np.exp(-(x * x) / (2.0 * sigma * sigma))
    return k / k.sum()


def _convolve_axis(a: np.ndarray, kernel: np.ndarray, axis: int) -> np.ndarray:
    r = kernel.size // 2
    if r == 0:
        return a * kernel[0]
    pad = [(0, 0)] * a.ndim
    pad[axis] = (r, r)
    padded = np.pad(a, pad, mode="edge")
    windows = np.lib.stride_tricks.sliding_window_view(padded, kernel.size, axis=axis)
    # kernel is symmetric, so correlation == convolution
    return windows @ kernel


def gaussian_filter_array(a: np.ndarray, sigma: float, width: float) -> np.ndarray:
    """Separable Gaussian blur over the last two axes of ``a`` (replicate borders)."""
    kernel = gaussian_kernel(sigma, width)
    out = _convolve_axis(np.asarray(a, dtype=np.float64), kernel, axis=-1)
    return _convolve_axis(out, kernel, axis=-2)


def gaussian_filter(r: Raster, sigma: float, width: float) -> Raster:
    """Blur ``r`` with a separable sampled Gaussian of side ``round_odd(width)``.

    Borders are handled by replicate padding, so the output is a convex
    combination of input values and constants are preserved exactly.
    """
    if not np.all(np.isfinite(r.values)):
        raise ValueError("gaussian_filter: non-finite input")
    return Raster(gaussian_filter_array(r.values, sigma, width))


def _bilinear_axis(n_in: int, n_out: int):
    if n_out == 1 or n_in == 1:
        pos = np.zeros(n_out)
    else:
        pos = np.arange(n_out) * ((n_in - 1) / (n_out - 1))
    lo = np.clip(np.floor(pos).astype(np.int64), 0, n_in - 1)
    hi = np.minimum(lo + 1, n_in - 1)
    frac = pos - lo
    return lo, hi, frac


def resample_bilinear(r: Raster, new_width: int, new_height: int) -> Raster:
    """Bilinear resampling with corner pixel centers aligned (align-corners)."""
    if new_width < 1 or new_height < 1:
        raise ValueError("target dimensions must be >= 1")
    if (new_width, new_height) == (r.width, r.height):
        return Raster(r.values.copy())
    v = r.values
    y0, y1, fy = _bilinear_axis(r.height, new_height)
    x0, x1, fx = _bilinear_axis(r.width, new_width)
    fy = fy[:, None]
    top = v[y0][:, x0] * (1 - fx) + v[y0][:, x1] * fx
    bottom = v[y1][:, x0] * (1 - fx) + v[y1][:, x1] * fx
    out = top * (1 - fy) + bottom * fy
    # guard against rounding drift outside the input range
    return Raster(np.clip(out, v.min(), v.max()))


def normalize_minmax(r: Raster) -> Raster:
    """Scale to [0, 1]; a constant raster maps to all zeros."""
    v = r.values
    lo, hi = v.min(), v.max()
    if hi <= lo:
        return Raster(np.zeros_like(v))
    return Raster((v - lo) / (hi - lo))


# --- file formats -----------------------------------------------------------

def write_rstr(path: str | os.PathLike, r: Raster) -> None:
    """Write an RSTR1 file: ASCII header then float32 little-endian values."""
    header = f"RSTR1 {r.width} {r.height}\n".encode("ascii")
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(r.values.astype("<f4").tobytes())


def read_rstr(path: str | os.PathLike) -> Raster:
    with open(path, "rb") as fh:
        data = fh.read()
    nl = data.index(b"\n")
    parts = data[:nl].decode("ascii").split()
    if len(parts) != 3 or parts[0] != "RSTR1":
        raise ValueError(f"{path}: not an RSTR1 file")
    w, h = int(parts[1]), int(parts[2])
    vals = np.frombuffer(data[nl + 1:], dtype="<f4")
    if vals.size != w * h:
        raise ValueError(f"{path}: expected {w * h} values, found {vals.size}")
    return Raster(vals.reshape(h, w).astype(np.float64))


def write_pgm(path: str | os.PathLike, r: Raster) -> None:
    """8-bit binary PGM preview, min-max scaled to 0-255."""
    v = normalize_minmax(r).values
    pix = np.round(v * 255).astype(np.uint8)
    with open(path, "wb") as fh:
        fh.write(f"P5\n{r.width} {r.height}\n255\n".encode("ascii"))
        fh.write(pix.tobytes())


def write_ppm(path: str | os.PathLike, img: RgbImage) -> None:
    pix = np.round(img.values.transpose(1, 2, 0) * 255).astype(np.uint8)
    with open(path, "wb") as fh:
        fh.write(f"P6\n{img.width} {img.height}\n255\n".encode("ascii"))
        fh.write(pix.tobytes())


def _pnm_tokens(data: bytes, count: int):
    tokens, pos = [], 0
    while len(tokens) < count:
        while data[pos:pos + 1].isspace():
            pos += 1
        if data[pos:pos + 1] == b"#":
            pos = data.index(b"\n", pos) + 1
            continue
        start = pos
        while not data[pos:pos + 1].isspace():
            pos += 1
        tokens.append(data[start:pos].decode("ascii"))
    return tokens, pos + 1


def read_ppm(path: str | os.PathLike) -> RgbImage:
    with open(path, "rb") as fh:
        data = fh.read()
    (magic, w, h, maxval), pos = _pnm_tokens(data, 4)
    if magic != "P6":
        raise ValueError(f"{path}: not a binary PPM (P6)")
    w, h, maxval = int(w), int(h), int(maxval)
    if maxval > 255:
        raise ValueError(f"{path}: 16-bit PPM not supported")
    pix = np.frombuffer(data[pos:pos + w * h * 3], dtype=np.uint8).reshape(h, w, 3)
    return RgbImage(pix.transpose(2, 0, 1).astype(np.float64) / maxval)
