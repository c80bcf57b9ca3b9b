"""Eye-centre localisation: region acquisition, pre-processing, Hough + min-intensity.

Typical use with cascades::

    cfg = PipelineConfig()
    result = run(frame, cfg, face_model=builtin_cascade("face"),
                 eye_model=builtin_cascade("eye"))
    result.left.center, result.right.center

or with eye regions supplied by the caller (``regions=(left_rect, right_rect)``).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from . import imagecore as ic
from .cascade import CascadeModel, DetectParams, detect_multiscale
from .hough import Circle, HoughParams, hough_circle
from .imagecore import Rect, round_half_up


class ConfigError(ValueError):
    """Bad models, regions or settings; raised before any image work."""


HOUGH_MIN_INTENSITY = "hough_min_intensity"
REGION_CENTER_FALLBACK = "region_center_fallback"


@dataclass(frozen=True)
class PipelineConfig:
    smooth_kernel_size: int = 5
    smooth_sigma_frac: float = 0.05
    face_keep_frac: float = 0.60
    t_e: float = 0.30
    t_b: int = 77
    se_frac: float = 0.05
    hough: HoughParams = field(default_factory=HoughParams)
    face_detect: DetectParams = field(default_factory=DetectParams)
    eye_detect: DetectParams = field(default_factory=DetectParams)

    def __post_init__(self):
        if self.smooth_kernel_size < 1 or self.smooth_kernel_size % 2 == 0:
            raise ValueError(f"smooth_kernel_size must be odd and >= 1, got {self.smooth_kernel_size}")
        for name in ("smooth_sigma_frac", "face_keep_frac", "se_frac"):
            v = getattr(self, name)
            if not 0 < v < 1:
                raise ValueError(f"{name} must lie in (0, 1), got {v}")
        if not 0 <= self.t_e < 1:
            raise ValueError(f"t_e must lie in [0, 1), got {self.t_e}")
        if not 0 <= self.t_b <= 255:
            raise ValueError(f"t_b must lie in [0, 255], got {self.t_b}")

    def with_threshold(self, t_b: int) -> "PipelineConfig":
        return replace(self, t_b=int(t_b))


@dataclass(frozen=True)
class EyeRegion:
    rect: Rect
    side: str  # "left" | "right", by image x
    source: str  # cascade | fallback_rescan | anthropometric_default | provided


@dataclass(frozen=True)
class EyeResult:
    center: tuple[int, int]  # full-frame pixel coordinates
    method: str
    circle: Optional[Circle]  # coordinates local to the pre-processed region
    region: EyeRegion
    crop_offset: int = 0  # rows removed from the top of the region

    @property
    def circle_in_frame(self) -> Optional[Circle]:
        if self.circle is None:
            return None
        c = self.circle
        return replace(c, cx=c.cx + self.region.rect.x, cy=c.cy + self.region.rect.y + self.crop_offset)


@dataclass(frozen=True)
class LocalizationResult:
    left: EyeResult
    right: EyeResult
    face: Optional[Rect] = None
    face_source: str = "provided"


# ------------------------------------------------------------- detection

def detect_face(frame, face_model: CascadeModel,
                params: DetectParams = DetectParams()) -> tuple[Rect, str]:
    """Largest face, or the whole frame flagged ``"full_frame"`` when nothing is found."""
    frame = ic.as_gray(frame)
    hits = detect_multiscale(frame, face_model, params)
    if hits:
        return hits[0], "cascade"
    h, w = frame.shape
    return Rect(0, 0, w, h), "full_frame"


def _nearest(hits: list[Rect], cx: float, cy: float) -> Rect:
    return min(hits, key=lambda r: (r.center[0] - cx) ** 2 + (r.center[1] - cy) ** 2)


def face_halves(face: Rect, keep_frac: float = 0.60) -> tuple[Rect, Rect]:
    """Top ``keep_frac`` of the face, cut at the vertical midline."""
    kh = max(1, int(round_half_up(face.h * keep_frac)))
    lw = max(1, face.w // 2)
    rw = max(1, face.w - lw)
    return Rect(face.x, face.y, lw, kh), Rect(face.x + face.w - rw, face.y, rw, kh)


def anthropometric_box(half: Rect) -> Rect:
    """Default eye box inside one face half (width 0.9, height 0.5, centre at 45 % height)."""
    w = max(1, min(half.w, int(round_half_up(0.9 * half.w))))
    h = max(1, min(half.h, int(round_half_up(0.5 * half.h))))
    x = half.x + (half.w - w) // 2
    cy = 0.45 * half.h
    y = int(round_half_up(cy - h / 2.0))
    y = half.y + min(max(0, y), half.h - h)
    return Rect(x, y, w, h)


def eye_regions(frame, face: Rect, eye_model: CascadeModel,
                params: DetectParams = DetectParams(),
                keep_frac: float = 0.60) -> tuple[EyeRegion, EyeRegion]:
    frame = ic.as_gray(frame)
    out = []
    for half, side in zip(face_halves(face, keep_frac), ("left", "right")):
        img = ic.crop(frame, half)
        hits = detect_multiscale(img, eye_model, params)
        source = "cascade"
        rect = hits[0] if hits else None
        if rect is None:
            rescan = replace(params, min_neighbors=0, scale_factor=min(params.scale_factor, 1.05))
            hits = detect_multiscale(img, eye_model, rescan)
            if hits:
                rect = _nearest(hits, half.w / 2.0, half.h / 2.0)
                source = "fallback_rescan"
        if rect is None:
            out.append(EyeRegion(anthropometric_box(half), side, "anthropometric_default"))
        else:
            out.append(EyeRegion(Rect(rect.x + half.x, rect.y + half.y, rect.w, rect.h), side, source))
    return _order(out[0].rect, out[1].rect, out[0].source, out[1].source)


def _order(a: Rect, b: Rect, sa: str, sb: str) -> tuple[EyeRegion, EyeRegion]:
    if b.center[0] < a.center[0]:
        a, b, sa, sb = b, a, sb, sa
    return EyeRegion(a, "left", sa), EyeRegion(b, "right", sb)


# -------------------------------------------------------- pre-processing

@dataclass(frozen=True)
class Preprocessed:
    binary: np.ndarray
    equalized: np.ndarray
    crop_offset: int
    degenerate: bool = False


def preprocess(region_gray, cfg: PipelineConfig = PipelineConfig()) -> Preprocessed:
    """Eyebrow crop, equalisation, binarisation at T_b, closing of the dark set."""
    region = ic.as_gray(region_gray)
    h, w = region.shape
    rows = int(round_half_up(cfg.t_e * h))
    degenerate = h - rows < 4
    if degenerate:
        rows = 0
    cropped = region[rows:]
    eq = ic.equalize_histogram(cropped)
    binary = ic.binarize(eq, cfg.t_b)
    binary = ic.close_dark(binary, ic.StructuringElement.for_region(w, cfg.se_frac))
    return Preprocessed(binary, eq, rows, degenerate)


def min_intensity_center(equalized: np.ndarray, circle: Circle) -> tuple[int, int]:
    """Centroid of the darkest pixels strictly inside ``circle``.

    If the rounded centroid leaves the circle, snap to the darkest pixel
    nearest the circle centre (row-major on ties).
    """
    h, w = equalized.shape
    ys, xs = np.mgrid[0:h, 0:w]
    inside = (xs - circle.cx) ** 2 + (ys - circle.cy) ** 2 < circle.r ** 2
    m = equalized[inside].min()
    sel = inside & (equalized == m)
    sy, sx = np.nonzero(sel)
    px = int(round_half_up(sx.mean()))
    py = int(round_half_up(sy.mean()))
    if circle.contains(px, py):
        return px, py
    d2 = (sx - circle.cx) ** 2 + (sy - circle.cy) ** 2
    i = int(np.argmin(d2))  # nonzero() is row-major, argmin takes the first
    return int(sx[i]), int(sy[i])


def localize_center(binary, equalized, cfg: PipelineConfig = PipelineConfig()
                    ) -> tuple[tuple[int, int], str, Optional[Circle]]:
    binary = np.asarray(binary)
    equalized = np.asarray(equalized)
    if binary.shape != equalized.shape:
        raise ValueError(f"shape mismatch: {binary.shape} vs {equalized.shape}")
    circle = hough_circle(binary, cfg.hough)
    if circle is None:
        h, w = binary.shape
        return (w // 2, h // 2), REGION_CENTER_FALLBACK, None
    return min_intensity_center(equalized, circle), HOUGH_MIN_INTENSITY, circle


# ----------------------------------------------------------------- driver

def smooth_frame(frame, cfg: PipelineConfig = PipelineConfig()) -> np.ndarray:
    return ic.smooth(frame, cfg.smooth_kernel_size, cfg.smooth_sigma_frac)


def check_regions(regions, width: int, height: int) -> tuple[Rect, Rect]:
    try:
        a, b = (Rect(*(int(v) for v in r)) for r in regions)
    except (TypeError, ValueError):
        raise ConfigError(f"malformed eye regions: {regions!r}") from None
    for r in (a, b):
        if r.w < 1 or r.h < 1 or r.x < 0 or r.y < 0 or r.x + r.w > width or r.y + r.h > height:
            raise ConfigError(f"eye region {tuple(r)} lies outside the {width}x{height} frame")
    return a, b


def acquire_regions(smoothed, cfg: PipelineConfig = PipelineConfig(),
                    face_model: Optional[CascadeModel] = None,
                    eye_model: Optional[CascadeModel] = None,
                    regions=None) -> tuple[tuple[EyeRegion, EyeRegion], Optional[Rect], str]:
    """Eye regions for a smoothed frame -> ((left, right), face, face_source)."""
    h, w = smoothed.shape
    if regions is not None:
        a, b = check_regions(regions, w, h)
        return _order(a, b, "provided", "provided"), None, "provided"
    if face_model is None or eye_model is None:
        raise ConfigError("either eye regions or both face and eye models are required")
    face, face_source = detect_face(smoothed, face_model, cfg.face_detect)
    return eye_regions(smoothed, face, eye_model, cfg.eye_detect, cfg.face_keep_frac), face, face_source


def localize_region(smoothed, region: EyeRegion, cfg: PipelineConfig = PipelineConfig()) -> EyeResult:
    pre = preprocess(ic.crop(smoothed, region.rect), cfg)
    (lx, ly), method, circle = localize_center(pre.binary, pre.equalized, cfg)
    center = (region.rect.x + lx, region.rect.y + pre.crop_offset + ly)
    return EyeResult(center, method, circle, region, pre.crop_offset)


def run(frame, cfg: PipelineConfig = PipelineConfig(),
        face_model: Optional[CascadeModel] = None,
        eye_model: Optional[CascadeModel] = None,
        regions=None) -> LocalizationResult:
    """Localise both eye centres in ``frame`` (full-frame coordinates)."""
    if regions is None and (face_model is None or eye_model is None):
        raise ConfigError("either eye regions or both face and eye models are required")
    frame = ic.as_gray(frame)
    if regions is not None:
        check_regions(regions, frame.shape[1], frame.shape[0])
    smoothed = smooth_frame(frame, cfg)
    (left, right), face, face_source = acquire_regions(smoothed, cfg, face_model, eye_model, regions)
    return LocalizationResult(localize_region(smoothed, left, cfg),
                              localize_region(smoothed, right, cfg), face, face_source)


# ---------------------------------------------------------- SZP baseline

def szp_roi(region_gray, side_frac: float = 0.4) -> Rect:
    """Projection-histogram ROI: square centred on the darkest column and row.

    This is the first stage of the older two-step Hough method; a dark band
    (hair, glasses frame) pulls the row minimum away from the iris.
    """
    region = ic.as_gray(region_gray).astype(np.int64)
    h, w = region.shape
    col = int(np.argmin(region.sum(axis=0)))
    row = int(np.argmin(region.sum(axis=1)))
    side = max(1, min(int(round_half_up(side_frac * w)), w, h))
    x = min(max(0, col - side // 2), w - side)
    y = min(max(0, row - side // 2), h - side)
    return Rect(x, y, side, side)


# --------------------------------------------------------- region files

def parse_regions_manifest(text: str) -> dict[str, tuple[Rect, Rect]]:
    """``filename x_l y_l w_l h_l x_r y_r w_r h_r`` per line, '#' comments allowed."""
    out = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        if len(parts) != 9:
            raise ConfigError(f"regions line {lineno}: expected 9 fields, got {len(parts)}")
        try:
            v = [int(p) for p in parts[1:]]
        except ValueError:
            raise ConfigError(f"regions line {lineno}: non-integer coordinate") from None
        a, b = Rect(*v[:4]), Rect(*v[4:])
        if min(a.w, a.h, b.w, b.h) < 1:
            raise ConfigError(f"regions line {lineno}: rect sides must be >= 1")
        out[parts[0]] = (a, b)
    return out


def format_regions_line(name: str, left: Rect, right: Rect) -> str:
    return " ".join([name, *map(str, left), *map(str, right)])
