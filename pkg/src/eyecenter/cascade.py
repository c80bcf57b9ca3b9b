"""Inference for stump-based Haar cascades (legacy OpenCV XML layout).

Only detection is implemented; models are trained elsewhere and loaded from
the legacy ``opencv-haar-classifier`` serialization, e.g.::

    <opencv_storage>
    <haarcascade_eye type_id="opencv-haar-classifier">
      <size>20 20</size>
      <stages>
        <_>
          <trees>
            <_>
              <_>
                <feature><rects><_>0 8 20 12 -1.</_>...</rects>
                  <tilted>0</tilted></feature>
                <threshold>0.1296</threshold>
                <left_val>-0.773</left_val>
                <right_val>0.683</right_val></_></_>
            ...
          </trees>
          <stage_threshold>-1.456</stage_threshold>
          ...
"""

from __future__ import annotations

import xml.etree.ElementTree as ET
from dataclasses import dataclass
from importlib import resources
from typing import Optional

import numpy as np

from .imagecore import IntegralImage, Rect, as_gray, integral_images, round_half_up


class CascadeFormatError(ValueError):
    """Raised when a cascade document cannot be parsed; carries the element path."""


@dataclass(frozen=True)
class HaarFeature:
    # (x, y, w, h, weight) in base-window coordinates
    rects: tuple[tuple[int, int, int, int, float], ...]


@dataclass(frozen=True)
class Stump:
    feature: HaarFeature
    threshold: float
    left_value: float
    right_value: float


@dataclass(frozen=True)
class Stage:
    stumps: tuple[Stump, ...]
    threshold: float


@dataclass(frozen=True)
class CascadeModel:
    window_w: int
    window_h: int
    stages: tuple[Stage, ...]
    name: str = "cascade"


@dataclass(frozen=True)
class DetectParams:
    scale_factor: float = 1.1
    step: float = 2.0
    min_neighbors: int = 3
    min_size: Optional[int] = None
    max_size: Optional[int] = None

    def __post_init__(self):
        if not self.scale_factor > 1:
            raise ValueError(f"scale_factor must be > 1, got {self.scale_factor}")
        if self.step <= 0:
            raise ValueError(f"step must be positive, got {self.step}")
        if self.min_neighbors < 0:
            raise ValueError(f"min_neighbors must be >= 0, got {self.min_neighbors}")


# ----------------------------------------------------------------- parsing

def _num(elem, tag, path, conv=float):
    child = elem.find(tag)
    if child is None or child.text is None:
        raise CascadeFormatError(f"{path}/{tag}: missing")
    try:
        return conv(child.text.strip())
    except ValueError:
        raise CascadeFormatError(f"{path}/{tag}: not a number: {child.text.strip()!r}") from None


def _parse_node(node, path, ww, wh) -> Stump:
    feat = node.find("feature")
    if feat is None:
        raise CascadeFormatError(f"{path}/feature: missing")
    if (feat.findtext("tilted") or "0").strip() not in ("0", ""):
        raise CascadeFormatError(f"{path}/feature/tilted: tilted features are not supported")
    rects_el = feat.find("rects")
    if rects_el is None:
        raise CascadeFormatError(f"{path}/feature/rects: missing")
    rects = []
    for k, r in enumerate(rects_el):
        rpath = f"{path}/feature/rects/_[{k}]"
        parts = (r.text or "").split()
        if len(parts) != 5:
            raise CascadeFormatError(f"{rpath}: expected 'x y w h weight', got {r.text!r}")
        try:
            x, y, w, h = (int(p) for p in parts[:4])
            wt = float(parts[4])
        except ValueError:
            raise CascadeFormatError(f"{rpath}: malformed rect {r.text!r}") from None
        if x < 0 or y < 0 or w < 1 or h < 1 or x + w > ww or y + h > wh:
            raise CascadeFormatError(f"{rpath}: rect {x} {y} {w} {h} lies outside the {ww}x{wh} window")
        rects.append((x, y, w, h, wt))
    if not 2 <= len(rects) <= 3:
        raise CascadeFormatError(f"{path}/feature/rects: expected 2-3 rects, got {len(rects)}")
    if node.find("left_val") is None or node.find("right_val") is None:
        raise CascadeFormatError(f"{path}: only single-node trees with left_val/right_val leaves are supported")
    return Stump(
        HaarFeature(tuple(rects)),
        _num(node, "threshold", path),
        _num(node, "left_val", path),
        _num(node, "right_val", path),
    )


def parse_cascade(text: str) -> CascadeModel:
    try:
        root = ET.fromstring(text.encode() if isinstance(text, str) else text)
    except ET.ParseError as exc:
        raise CascadeFormatError(f"/: not well-formed XML ({exc})") from None
    casc = root if root.find("stages") is not None else next(iter(root), None)
    if casc is None or casc.find("stages") is None:
        raise CascadeFormatError("/: no cascade element with <stages> found")
    path = casc.tag
    size = casc.findtext("size")
    if size is None:
        raise CascadeFormatError(f"{path}/size: missing window size")
    try:
        ww, wh = (int(v) for v in size.split())
    except ValueError:
        raise CascadeFormatError(f"{path}/size: expected two integers, got {size!r}") from None
    if ww < 4 or wh < 4:
        raise CascadeFormatError(f"{path}/size: window must be at least 4x4, got {ww}x{wh}")

    stages = []
    for si, st in enumerate(casc.find("stages")):
        spath = f"{path}/stages/_[{si}]"
        trees = st.find("trees")
        if trees is None:
            raise CascadeFormatError(f"{spath}/trees: missing")
        stumps = []
        for ti, tree in enumerate(trees):
            tpath = f"{spath}/trees/_[{ti}]"
            nodes = list(tree)
            if len(nodes) != 1:
                raise CascadeFormatError(f"{tpath}: tree has {len(nodes)} nodes, only stumps are supported")
            stumps.append(_parse_node(nodes[0], f"{tpath}/_[0]", ww, wh))
        if not stumps:
            raise CascadeFormatError(f"{spath}/trees: empty stage")
        stages.append(Stage(tuple(stumps), _num(st, "stage_threshold", spath)))
    if not stages:
        raise CascadeFormatError(f"{path}/stages: no stages")
    return CascadeModel(ww, wh, tuple(stages), name=path)


def serialize_cascade(model: CascadeModel) -> str:
    out = ["<?xml version=\"1.0\"?>", "<opencv_storage>",
           f'<{model.name} type_id="opencv-haar-classifier">',
           f"  <size>{model.window_w} {model.window_h}</size>", "  <stages>"]
    for stage in model.stages:
        out.append("    <_>\n      <trees>")
        for s in stage.stumps:
            rects = "".join(f"<_>{x} {y} {w} {h} {wt!r}</_>" for x, y, w, h, wt in s.feature.rects)
            out.append(
                f"        <_><_><feature><rects>{rects}</rects><tilted>0</tilted></feature>"
                f"<threshold>{s.threshold!r}</threshold><left_val>{s.left_value!r}</left_val>"
                f"<right_val>{s.right_value!r}</right_val></_></_>")
        out.append(f"      </trees>\n      <stage_threshold>{stage.threshold!r}</stage_threshold></_>")
    out += ["  </stages>", f"</{model.name}>", "</opencv_storage>", ""]
    return "\n".join(out)


def load_cascade(path) -> CascadeModel:
    with open(path, encoding="utf-8") as f:
        return parse_cascade(f.read())


def builtin_cascade(kind: str) -> CascadeModel:
    """Load a vendored model: ``"face"`` or ``"eye"``."""
    fname = {"face": "haarcascade_frontalface_default.xml", "eye": "haarcascade_eye.xml"}[kind]
    return parse_cascade(resources.files("eyecenter.data").joinpath(fname).read_text("utf-8"))


# -------------------------------------------------------------- evaluation

def _scaled(v: float, scale: float) -> int:
    return int(round_half_up(v * scale))


def scale_feature(feature: HaarFeature, scale: float, win_w: int, win_h: int):
    """Scaled integer rects and weights of one feature.

    Each coordinate is rounded independently; rects are clipped to the
    scaled window. The first weight is then re-derived from the others so
    the feature keeps its zero response on flat patches after rounding (the
    legacy detector does the same); at exact scales this is the identity
    for the zero-sum features trained cascades contain.
    """
    rects = []
    for rx, ry, rw, rh, wt in feature.rects:
        x0, y0 = _scaled(rx, scale), _scaled(ry, scale)
        x1 = min(x0 + max(1, _scaled(rw, scale)), win_w)
        y1 = min(y0 + max(1, _scaled(rh, scale)), win_h)
        rects.append([x0, y0, x1, y1, wt])
    area0 = (rects[0][2] - rects[0][0]) * (rects[0][3] - rects[0][1])
    rest = sum(wt * (x1 - x0) * (y1 - y0) for x0, y0, x1, y1, wt in rects[1:])
    orig = feature.rects
    nominal = -sum(wt * w * h for _, _, w, h, wt in orig[1:]) / (orig[0][2] * orig[0][3])
    if area0 > 0 and orig[0][4] == nominal:
        rects[0][4] = -rest / area0
    return rects


class _CompiledStage:
    """Per-scale flat-index tables for one stage, evaluated for all stumps at once."""

    def __init__(self, stage: Stage, scale, win_w, win_h, stride_row):
        n = len(stage.stumps)
        self.offsets = np.zeros((n, 3, 4), dtype=np.int64)
        self.weights = np.zeros((n, 3))
        for i, stump in enumerate(stage.stumps):
            for j, (x0, y0, x1, y1, wt) in enumerate(scale_feature(stump.feature, scale, win_w, win_h)):
                self.offsets[i, j] = (y1 * stride_row + x1, y0 * stride_row + x1,
                                      y1 * stride_row + x0, y0 * stride_row + x0)
                self.weights[i, j] = wt
        self.thresholds = np.array([s.threshold for s in stage.stumps])
        self.left = np.array([s.left_value for s in stage.stumps])
        self.right = np.array([s.right_value for s in stage.stumps])
        self.threshold = stage.threshold

    def __call__(self, flat_sum, base, norm):
        # base: flat integral-image index of each window's top-left corner
        out = np.empty(base.size, dtype=bool)
        chunk = max(1, 2_000_000 // self.offsets[:, :, 0].size)
        for lo in range(0, base.size, chunk):
            b = base[lo:lo + chunk]
            corner = flat_sum[b[None, None, None, :] + self.offsets[:, :, :, None]]
            sums = corner[:, :, 0] - corner[:, :, 1] - corner[:, :, 2] + corner[:, :, 3]
            val = np.einsum("sr,srn->sn", self.weights, sums.astype(np.float64))
            votes = np.where(val < self.thresholds[:, None] * norm[None, lo:lo + chunk],
                             self.left[:, None], self.right[:, None])
            out[lo:lo + chunk] = votes.sum(axis=0) >= self.threshold
        return out


def _window_norm(ii: IntegralImage, xs, ys, w, h):
    """sigma_w * area per window, forced to 1 for constant windows."""
    s = ii.sum
    q = ii.sqsum
    area = w * h
    tot = s[ys + h, xs + w] - s[ys, xs + w] - s[ys + h, xs] + s[ys, xs]
    sq = q[ys + h, xs + w] - q[ys, xs + w] - q[ys + h, xs] + q[ys, xs]
    var_area2 = area * sq - tot * tot
    norm = np.sqrt(np.maximum(var_area2, 0).astype(np.float64))
    norm[var_area2 <= 0] = 1.0
    return norm


def _scan_windows(model: CascadeModel, ii: IntegralImage, xs, ys, scale: float,
                  win_w: int, win_h: int) -> np.ndarray:
    """Run the cascade on windows with top-left corners (xs, ys); True = passed."""
    xs = np.asarray(xs, dtype=np.int64)
    ys = np.asarray(ys, dtype=np.int64)
    row = ii.sum.shape[1]
    flat = ii.sum.ravel()
    base = ys * row + xs
    norm = _window_norm(ii, xs, ys, win_w, win_h)
    alive = np.arange(xs.size)
    for stage in model.stages:
        if alive.size == 0:
            break
        compiled = _CompiledStage(stage, scale, win_w, win_h, row)
        alive = alive[compiled(flat, base[alive], norm[alive])]
    passed = np.zeros(xs.size, dtype=bool)
    passed[alive] = True
    return passed


def evaluate_window(model: CascadeModel, ii: IntegralImage, window: Rect, scale: float) -> bool:
    x, y, w, h = window
    if x < 0 or y < 0 or x + w > ii.width or y + h > ii.height:
        raise IndexError(f"window {tuple(window)} lies outside the {ii.width}x{ii.height} image")
    return bool(_scan_windows(model, ii, [x], [y], scale, w, h)[0])


def feature_value(feature: HaarFeature, ii: IntegralImage, x: int, y: int, scale: float = 1.0,
                  win_w: int | None = None, win_h: int | None = None) -> float:
    """Weighted rect sum (before variance normalisation) of a feature at one window."""
    win_w = win_w if win_w is not None else ii.width - x
    win_h = win_h if win_h is not None else ii.height - y
    return sum(wt * ii.rect_sum(x + x0, y + y0, x1 - x0, y1 - y0)
               for x0, y0, x1, y1, wt in scale_feature(feature, scale, win_w, win_h))


def raw_detections(image, model: CascadeModel, params: DetectParams = DetectParams()) -> list[Rect]:
    img = as_gray(image)
    ih, iw = img.shape
    ii = integral_images(img)
    hits: list[Rect] = []
    k = 0
    while True:
        scale = params.scale_factor ** k
        k += 1
        win_w = _scaled(model.window_w, scale)
        win_h = _scaled(model.window_h, scale)
        if win_w > iw or win_h > ih:
            break
        if params.max_size is not None and max(win_w, win_h) > params.max_size:
            break
        if params.min_size is not None and min(win_w, win_h) < params.min_size:
            continue
        stride = max(1, _scaled(params.step, scale))
        gx = np.arange(0, iw - win_w + 1, stride)
        gy = np.arange(0, ih - win_h + 1, stride)
        xs, ys = np.meshgrid(gx, gy)
        xs, ys = xs.ravel(), ys.ravel()
        ok = _scan_windows(model, ii, xs, ys, scale, win_w, win_h)
        hits.extend(Rect(int(x), int(y), win_w, win_h) for x, y in zip(xs[ok], ys[ok]))
    return hits


def _sort_rects(rects):
    return sorted(rects, key=lambda r: (-r.area, r.y, r.x, r.w, r.h))


def group_rects(hits: list[Rect], min_neighbors: int = 3, eps: float = 0.2) -> list[Rect]:
    """Merge similar rectangles and keep classes with more than ``min_neighbors`` members.

    With ``min_neighbors == 0`` no merging happens; only exact duplicates collapse.
    """
    hits = [Rect(*map(int, r)) for r in hits]
    if min_neighbors == 0:
        return _sort_rects(set(hits))
    hits.sort(key=lambda r: (r.y, r.x, r.w, r.h))
    n = len(hits)
    parent = list(range(n))

    def find(i):
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    for i in range(n):
        a = hits[i]
        for j in range(i + 1, n):
            b = hits[j]
            tol = eps * (a.w + a.h + b.w + b.h) / 4.0
            if (abs(a.x - b.x) <= tol and abs(a.y - b.y) <= tol
                    and abs(a.w - b.w) <= tol and abs(a.h - b.h) <= tol):
                ri, rj = find(i), find(j)
                if ri != rj:
                    parent[max(ri, rj)] = min(ri, rj)

    classes: dict[int, list[Rect]] = {}
    for i, r in enumerate(hits):
        classes.setdefault(find(i), []).append(r)
    out = []
    for members in classes.values():
        if len(members) > min_neighbors:
            m = np.array(members, dtype=np.float64).mean(axis=0)
            out.append(Rect(*(int(v) for v in round_half_up(m))))
    return _sort_rects(out)


def detect_multiscale(image, model: CascadeModel, params: DetectParams = DetectParams()) -> list[Rect]:
    """Scan all scales, group the raw hits, return rects by decreasing area."""
    return group_rects(raw_detections(image, model, params), params.min_neighbors)
