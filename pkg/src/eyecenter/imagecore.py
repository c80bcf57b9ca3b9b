"""Grayscale rasters, PGM I/O and the low-level operators the pipeline uses.

Images are plain numpy arrays indexed ``img[y, x]``: ``uint8`` intensities
for gray images and ``uint8`` values in {0, 1} for binary masks, where 1 is
bright (above threshold) and 0 is dark.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from typing import Iterable, NamedTuple, Sequence

import numpy as np


class ImageFormatError(ValueError):
    """Raised for malformed PGM data."""


class Rect(NamedTuple):
    x: int
    y: int
    w: int
    h: int

    @property
    def area(self) -> int:
        return self.w * self.h

    @property
    def center(self) -> tuple[float, float]:
        return (self.x + self.w / 2.0, self.y + self.h / 2.0)

    def contains(self, px: float, py: float) -> bool:
        return self.x <= px < self.x + self.w and self.y <= py < self.y + self.h


def round_half_up(x):
    """Round to nearest, halves away from zero (inputs here are >= 0)."""
    if isinstance(x, np.ndarray):
        return np.sign(x) * np.floor(np.abs(x) + 0.5)
    return int(math.copysign(math.floor(abs(x) + 0.5), x))


def as_gray(img) -> np.ndarray:
    """Validate and return a 2-D uint8 array."""
    arr = np.asarray(img)
    if arr.ndim != 2 or arr.shape[0] < 1 or arr.shape[1] < 1:
        raise ValueError(f"expected a non-empty 2-D image, got shape {arr.shape}")
    if arr.dtype != np.uint8:
        if arr.size and (arr.min() < 0 or arr.max() > 255):
            raise ValueError("gray values must lie in [0, 255]")
        arr = arr.astype(np.uint8)
    return arr


# ---------------------------------------------------------------- PGM I/O

_TOKEN = re.compile(rb"\s*(?:#[^\n\r]*[\n\r]\s*)*(\S+)")


def _header_tokens(data: bytes, count: int) -> tuple[list[bytes], int]:
    tokens = []
    pos = 0
    for _ in range(count):
        m = _TOKEN.match(data, pos)
        if m is None:
            raise ImageFormatError(f"truncated header: expected {count} fields, got {len(tokens)}")
        tokens.append(m.group(1))
        pos = m.end()
    return tokens, pos


def load_pgm(data: bytes) -> np.ndarray:
    """Decode a P5 (binary) or P2 (ASCII) PGM with maxval <= 255."""
    if data[:2] not in (b"P5", b"P2"):
        raise ImageFormatError(f"magic: expected P5 or P2, got {data[:2]!r}")
    magic = data[:2]
    # '#' comments may appear anywhere in the header after the magic
    tokens, pos = _header_tokens(data[2:], 3)
    pos += 2
    names = ("width", "height", "maxval")
    vals = []
    for name, tok in zip(names, tokens):
        try:
            vals.append(int(tok))
        except ValueError:
            raise ImageFormatError(f"{name}: not an integer: {tok!r}") from None
    w, h, maxval = vals
    if w < 1:
        raise ImageFormatError(f"width: must be >= 1, got {w}")
    if h < 1:
        raise ImageFormatError(f"height: must be >= 1, got {h}")
    if not 1 <= maxval <= 255:
        raise ImageFormatError(f"maxval: must be in [1, 255], got {maxval}")

    if magic == b"P5":
        # exactly one whitespace byte separates maxval from the raster
        start = pos + 1
        raster = data[start:start + w * h]
        if len(raster) < w * h:
            raise ImageFormatError(f"raster: truncated, expected {w * h} bytes, got {len(raster)}")
        img = np.frombuffer(raster, dtype=np.uint8).reshape(h, w).copy()
    else:
        body = re.sub(rb"#[^\n\r]*", b" ", data[pos:]).split()
        if len(body) < w * h:
            raise ImageFormatError(f"raster: truncated, expected {w * h} values, got {len(body)}")
        try:
            vals = np.array([int(t) for t in body[:w * h]], dtype=np.int64)
        except ValueError:
            raise ImageFormatError("raster: non-integer sample") from None
        if vals.max(initial=0) > maxval:
            raise ImageFormatError("raster: sample exceeds maxval")
        img = vals.astype(np.uint8).reshape(h, w)
    if img.max(initial=0) > maxval:
        raise ImageFormatError("raster: sample exceeds maxval")
    return img


def save_pgm(img, fmt: str = "P5") -> bytes:
    img = as_gray(img)
    h, w = img.shape
    if fmt == "P5":
        return f"P5\n{w} {h}\n255\n".encode() + img.tobytes()
    if fmt == "P2":
        lines = [f"P2\n{w} {h}\n255"]
        lines.extend(" ".join(str(v) for v in row) for row in img)
        return ("\n".join(lines) + "\n").encode()
    raise ValueError(f"unknown PGM format {fmt!r}")


def read_pgm(path) -> np.ndarray:
    with open(path, "rb") as f:
        return load_pgm(f.read())


def write_pgm(path, img, fmt: str = "P5") -> None:
    with open(path, "wb") as f:
        f.write(save_pgm(img, fmt))


# ------------------------------------------------------------- filtering

def gaussian_kernel(size: int, sigma: float) -> np.ndarray:
    """Sampled isotropic Gaussian, normalised to unit sum."""
    if size < 1 or size % 2 == 0:
        raise ValueError(f"kernel size must be a positive odd integer, got {size}")
    if not sigma > 0:
        raise ValueError(f"sigma must be positive, got {sigma}")
    half = size // 2
    d = np.arange(-half, half + 1, dtype=np.float64)
    k = np.exp(-(d[None, :] ** 2 + d[:, None] ** 2) / (2.0 * sigma * sigma))
    return k / k.sum()


def convolve(img, kernel: np.ndarray) -> np.ndarray:
    """Correlate with a (symmetric) kernel using replicated borders.

    Sums are accumulated in kernel row-major order; the result is rounded
    half away from zero and clamped to [0, 255].
    """
    img = as_gray(img)
    kernel = np.asarray(kernel, dtype=np.float64)
    kh, kw = kernel.shape
    py, px = kh // 2, kw // 2
    padded = np.pad(img.astype(np.float64), ((py, py), (px, px)), mode="edge")
    h, w = img.shape
    acc = np.zeros((h, w), dtype=np.float64)
    for i in range(kh):
        for j in range(kw):
            acc += kernel[i, j] * padded[i:i + h, j:j + w]
    return np.clip(round_half_up(acc), 0, 255).astype(np.uint8)


def smooth(img, size: int = 5, sigma_frac: float = 0.05) -> np.ndarray:
    """Gaussian smoothing with sigma tied to the image width."""
    img = as_gray(img)
    return convolve(img, gaussian_kernel(size, sigma_frac * img.shape[1]))


def equalize_histogram(img) -> np.ndarray:
    img = as_gray(img)
    hist = np.bincount(img.ravel(), minlength=256)
    cdf = np.cumsum(hist)
    n = img.size
    cdf_min = cdf[np.flatnonzero(hist)[0]]
    if cdf_min == n:
        # single occupied level: leave the image as it is
        return img.copy()
    lut = round_half_up(255.0 * (cdf - cdf_min) / (n - cdf_min))
    lut = np.clip(lut, 0, 255).astype(np.uint8)
    return lut[img]


def binarize(img, threshold: int) -> np.ndarray:
    return (as_gray(img) > threshold).astype(np.uint8)


# ------------------------------------------------------------ morphology

@dataclass(frozen=True)
class StructuringElement:
    """Square structuring element of odd side >= 3."""

    side: int = 3

    def __post_init__(self):
        if self.side < 3 or self.side % 2 == 0:
            raise ValueError(f"structuring element side must be odd and >= 3, got {self.side}")

    @classmethod
    def for_region(cls, region_width: int, frac: float = 0.05) -> "StructuringElement":
        # nearest odd integer, ties upward
        side = 2 * math.floor(frac * region_width / 2.0) + 1
        return cls(max(3, side))


def _square_max(mask: np.ndarray, rad: int) -> np.ndarray:
    """Dilate a boolean mask by a (2 rad + 1) square; outside counts as False."""
    out = mask.copy()
    for axis in (0, 1):
        p = np.pad(out, [(rad, rad) if a == axis else (0, 0) for a in (0, 1)])
        win = np.lib.stride_tricks.sliding_window_view(p, 2 * rad + 1, axis=axis)
        out = win.any(axis=-1)
    return out


def close_dark(binary, se: StructuringElement = StructuringElement()) -> np.ndarray:
    """Morphological closing of the dark (0-valued) set.

    Pixels outside the image are bright, so the dark set never leaks off the
    image and image borders cannot be absorbed into a dark blob.
    """
    b = np.asarray(binary)
    rad = se.side // 2
    dark = np.pad(b == 0, rad, constant_values=False)
    dilated = _square_max(dark, rad)
    # erosion of the dark set == complement of the dilated bright set
    eroded = ~_square_max(~dilated, rad)
    closed = eroded[rad:-rad, rad:-rad]
    return (~closed).astype(np.uint8)


# --------------------------------------------------------- integral image

@dataclass(frozen=True)
class IntegralImage:
    """Zero-padded (h+1, w+1) cumulative sums of pixel values and squares."""

    sum: np.ndarray
    sqsum: np.ndarray

    @property
    def width(self) -> int:
        return self.sum.shape[1] - 1

    @property
    def height(self) -> int:
        return self.sum.shape[0] - 1

    def rect_sum(self, x: int, y: int, w: int, h: int) -> int:
        s = self.sum
        return int(s[y + h, x + w] - s[y, x + w] - s[y + h, x] + s[y, x])

    def rect_sqsum(self, x: int, y: int, w: int, h: int) -> int:
        s = self.sqsum
        return int(s[y + h, x + w] - s[y, x + w] - s[y + h, x] + s[y, x])


def integral_images(img) -> IntegralImage:
    a = as_gray(img).astype(np.int64)
    h, w = a.shape
    s = np.zeros((h + 1, w + 1), dtype=np.int64)
    q = np.zeros((h + 1, w + 1), dtype=np.int64)
    s[1:, 1:] = a.cumsum(0).cumsum(1)
    q[1:, 1:] = (a * a).cumsum(0).cumsum(1)
    return IntegralImage(s, q)


# ------------------------------------------------------- crop / annotate

def crop(img, rect: Rect) -> np.ndarray:
    img = np.asarray(img)
    h, w = img.shape
    x, y, rw, rh = rect
    if rw < 1 or rh < 1 or x < 0 or y < 0 or x + rw > w or y + rh > h:
        raise IndexError(f"rect {tuple(rect)} lies outside the {w}x{h} image")
    return img[y:y + rh, x:x + rw].copy()


def midpoint_circle(cx: int, cy: int, r: int) -> set[tuple[int, int]]:
    """Pixels of the midpoint (Bresenham) circle outline of radius r."""
    pts = set()
    x, y = 0, r
    d = 1 - r
    while x <= y:
        for px, py in ((x, y), (y, x)):
            pts.update({(cx + px, cy + py), (cx - px, cy + py),
                        (cx + px, cy - py), (cx - px, cy - py)})
        if d < 0:
            d += 2 * x + 3
        else:
            d += 2 * (x - y) + 5
            y -= 1
        x += 1
    return pts


def annotate(img, circles: Iterable = (), points: Sequence[tuple[int, int]] = (),
             value: int = 255) -> np.ndarray:
    """Burn circle outlines and 5-px crosshairs into a copy of ``img``.

    ``circles`` holds objects with ``cx, cy, r`` attributes or (cx, cy, r)
    tuples, in image coordinates. Anything off-image is clipped.
    """
    out = as_gray(img).copy()
    h, w = out.shape
    pix: set[tuple[int, int]] = set()
    for c in circles:
        cx, cy, r = (c.cx, c.cy, c.r) if hasattr(c, "cx") else c[:3]
        pix |= midpoint_circle(int(cx), int(cy), int(r))
    for px, py in points:
        px, py = int(px), int(py)
        for k in range(-2, 3):
            pix.add((px + k, py))
            pix.add((px, py + k))
    for x, y in pix:
        if 0 <= x < w and 0 <= y < h:
            out[y, x] = value
    return out
