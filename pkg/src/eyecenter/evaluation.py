"""Normalised eye-centre errors, accuracy curves and k-fold threshold tuning."""

from __future__ import annotations

import csv
import io
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Iterable, Optional, Sequence

import numpy as np

from . import imagecore as ic
from .cascade import CascadeModel
from .pipeline import (PipelineConfig, acquire_regions, localize_region, smooth_frame)

THRESHOLDS = (0.05, 0.10, 0.15, 0.20, 0.25)
# round(k * 0.05 * 255), k = 1..19
DEFAULT_GRID = tuple(int(math.floor(12.75 * k + 0.5)) for k in range(1, 20))


class EyeFileError(ValueError):
    pass


Point = tuple[float, float]


@dataclass(frozen=True)
class GroundTruth:
    left: Point  # smaller x
    right: Point

    def __post_init__(self):
        if tuple(self.left) == tuple(self.right):
            raise EyeFileError(f"left and right eye centres coincide at {self.left}")

    @classmethod
    def from_points(cls, a: Point, b: Point) -> "GroundTruth":
        a, b = tuple(a), tuple(b)
        return cls(a, b) if (a[0], a[1]) <= (b[0], b[1]) else cls(b, a)

    @property
    def interocular(self) -> float:
        return math.hypot(self.left[0] - self.right[0], self.left[1] - self.right[1])


def parse_eye_file(text: str) -> GroundTruth:
    """BioID ``.eye`` file: '#LX LY RX RY' header, then four integers."""
    rows = []
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split()
        if len(parts) != 4:
            raise EyeFileError(f"line {lineno}: expected 4 fields, got {len(parts)}")
        try:
            rows.append([int(p) for p in parts])
        except ValueError:
            raise EyeFileError(f"line {lineno}: non-integer coordinate in {line!r}") from None
    if len(rows) != 1:
        raise EyeFileError(f"expected exactly one coordinate line, got {len(rows)}")
    lx, ly, rx, ry = rows[0]
    return GroundTruth.from_points((lx, ly), (rx, ry))


def read_eye_file(path) -> GroundTruth:
    with open(path, encoding="utf-8") as f:
        return parse_eye_file(f.read())


@dataclass(frozen=True)
class ErrorTriple:
    e_worst: float
    e_best: float
    e_average: float
    d_l: float
    d_r: float


def normalized_errors(pred_l: Point, pred_r: Point, gt: GroundTruth) -> ErrorTriple:
    """Worst, best and mean per-eye distance over the inter-ocular distance.

    ``pred_l`` is compared with ``gt.left`` as given; callers pair by image x.
    """
    d_l = math.hypot(pred_l[0] - gt.left[0], pred_l[1] - gt.left[1])
    d_r = math.hypot(pred_r[0] - gt.right[0], pred_r[1] - gt.right[1])
    iod = gt.interocular
    return ErrorTriple(max(d_l, d_r) / iod, min(d_l, d_r) / iod, (d_l + d_r) / (2 * iod), d_l, d_r)


@dataclass
class AccuracyReport:
    thresholds: tuple[float, ...]
    fractions: tuple[float, ...]
    n_images: int
    config: dict = field(default_factory=dict)

    def table(self) -> str:
        head = "".join(f"  e<={t:.2f}" for t in self.thresholds)
        vals = "".join(f"  {100 * f:7.2f}%" for f in self.fractions)
        lines = [f"# images: {self.n_images}"]
        lines += [f"# {k} = {v}" for k, v in self.config.items()]
        lines += ["threshold" + head.replace("  e<=", "  e<=  "), "accuracy " + vals]
        return "\n".join(lines) + "\n"

    def csv(self) -> str:
        out = ["threshold,fraction"]
        out += [f"{t:.2f},{f:.6f}" for t, f in zip(self.thresholds, self.fractions)]
        return "\n".join(out) + "\n"


def accuracy_at(errors: Sequence, thresholds: Sequence[float] = THRESHOLDS,
                config: Optional[dict] = None) -> AccuracyReport:
    """Fraction of images with e_worst <= t for each threshold."""
    if len(errors) == 0:
        raise ValueError("accuracy_at needs at least one error")
    ew = np.array([e.e_worst if isinstance(e, ErrorTriple) else float(e) for e in errors])
    fr = tuple(float(np.count_nonzero(ew <= t)) / ew.size for t in thresholds)
    return AccuracyReport(tuple(thresholds), fr, int(ew.size), dict(config or {}))


# ---------------------------------------------------------------- datasets

@dataclass(frozen=True)
class Sample:
    image: str
    eye: str

    @property
    def name(self) -> str:
        return os.path.basename(self.image)


def dataset_index(directory) -> list[Sample]:
    """``*.pgm`` frames with matching ``*.eye`` files, sorted by filename."""
    out = []
    for fname in sorted(os.listdir(directory)):
        if not fname.lower().endswith(".pgm"):
            continue
        eye = os.path.join(directory, fname[:-4] + ".eye")
        if os.path.exists(eye):
            out.append(Sample(os.path.join(directory, fname), eye))
    return out


@dataclass(frozen=True)
class FoldSplit:
    k: int
    seed: int
    assignment: tuple[int, ...]  # image index -> fold id

    def fold(self, i: int) -> list[int]:
        return [j for j, f in enumerate(self.assignment) if f == i]

    def complement(self, i: int) -> list[int]:
        return [j for j, f in enumerate(self.assignment) if f != i]


def kfold_split(n: int, k: int = 5, seed: int = 0) -> FoldSplit:
    if k < 1 or n < k:
        raise ValueError(f"need n >= k >= 1, got n={n}, k={k}")
    perm = np.random.default_rng(seed).permutation(n)
    assign = np.empty(n, dtype=int)
    assign[perm] = np.arange(n) % k
    return FoldSplit(k, seed, tuple(int(a) for a in assign))


# ------------------------------------------------------------ evaluation

@dataclass(frozen=True)
class ImageResult:
    name: str
    center_l: tuple[int, int]
    center_r: tuple[int, int]
    errors: ErrorTriple
    method_l: str
    method_r: str


class RegionSource:
    """Where eye regions come from: cascades or a provided-regions manifest."""

    def __init__(self, face_model: Optional[CascadeModel] = None,
                 eye_model: Optional[CascadeModel] = None,
                 regions: Optional[dict] = None):
        if regions is None and (face_model is None or eye_model is None):
            from .pipeline import ConfigError
            raise ConfigError("either a regions manifest or both face and eye models are required")
        self.face_model = face_model
        self.eye_model = eye_model
        self.regions = regions

    def regions_for(self, name: str):
        if self.regions is None:
            return None
        try:
            return self.regions[name]
        except KeyError:
            from .pipeline import ConfigError
            raise ConfigError(f"no provided regions for {name}") from None


def evaluate_image(sample: Sample, cfg: PipelineConfig, source: RegionSource,
                   thresholds_b: Sequence[int]) -> list[ImageResult]:
    """Run one frame at every T_b in ``thresholds_b``; regions are acquired once."""
    gt = read_eye_file(sample.eye)
    frame = ic.read_pgm(sample.image)
    smoothed = smooth_frame(frame, cfg)
    (left, right), _, _ = acquire_regions(smoothed, cfg, source.face_model, source.eye_model,
                                          source.regions_for(sample.name))
    out = []
    for t_b in thresholds_b:
        c = cfg.with_threshold(t_b)
        rl, rr = localize_region(smoothed, left, c), localize_region(smoothed, right, c)
        out.append(ImageResult(sample.name, rl.center, rr.center,
                               normalized_errors(rl.center, rr.center, gt), rl.method, rr.method))
    return out


def _evaluate_star(args):
    return evaluate_image(*args)


def error_table(dataset: Sequence[Sample], cfg: PipelineConfig, source: RegionSource,
                grid: Sequence[int], jobs: int = 1) -> list[list[ImageResult]]:
    """``table[i][g]``: result of image i at grid value g."""
    tasks = [(s, cfg, source, tuple(grid)) for s in dataset]
    if jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(jobs) as pool:
            return list(pool.map(_evaluate_star, tasks, chunksize=max(1, len(tasks) // (4 * jobs))))
    return [evaluate_image(*t) for t in tasks]


def select_threshold(table: Sequence[Sequence[ImageResult]], indices: Iterable[int],
                     grid: Sequence[int]) -> tuple[int, float]:
    """Best grid value on ``indices``: accuracy at 0.05, then at 0.10, then smaller T_b."""
    idx = list(indices)
    best = None
    for g, t_b in enumerate(grid):
        ew = np.array([table[i][g].errors.e_worst for i in idx])
        key = (np.count_nonzero(ew <= 0.05), np.count_nonzero(ew <= 0.10), -t_b)
        if best is None or key > best[0]:
            best = (key, t_b)
    (hits, _, _), t_b = best
    return t_b, hits / len(idx)


def tune_threshold(train: Sequence[Sample], cfg: PipelineConfig, source: RegionSource,
                   grid: Sequence[int] = DEFAULT_GRID, jobs: int = 1) -> tuple[int, float]:
    """(T_b, accuracy at e <= 0.05) maximising accuracy on ``train``."""
    if not train or not grid:
        raise ValueError("tune_threshold needs a non-empty training set and grid")
    table = error_table(train, cfg, source, grid, jobs)
    return select_threshold(table, range(len(train)), grid)


@dataclass
class CrossValidation:
    report: AccuracyReport
    fold_thresholds: list[int]
    results: list[ImageResult]  # held-out results, sorted by filename


def cross_validate(dataset: Sequence[Sample], cfg: PipelineConfig, source: RegionSource,
                   k: int = 5, seed: int = 0, grid: Sequence[int] = DEFAULT_GRID,
                   jobs: int = 1) -> CrossValidation:
    """Tune T_b on k-1 folds, score the held-out fold, pool the held-out errors."""
    dataset = sorted(dataset, key=lambda s: s.name)
    split = kfold_split(len(dataset), k, seed)
    table = error_table(dataset, cfg, source, grid, jobs)
    held: dict[int, ImageResult] = {}
    chosen = []
    for f in range(k):
        t_b, _ = select_threshold(table, split.complement(f), grid)
        chosen.append(t_b)
        g = list(grid).index(t_b)
        for i in split.fold(f):
            held[i] = table[i][g]
    results = [held[i] for i in range(len(dataset))]
    snapshot = config_snapshot(cfg)
    snapshot.update(k=k, seed=seed, grid=",".join(map(str, grid)),
                    fold_t_b=",".join(map(str, chosen)))
    report = accuracy_at([r.errors for r in results], THRESHOLDS, snapshot)
    return CrossValidation(report, chosen, results)


def config_snapshot(cfg: PipelineConfig) -> dict:
    flat = {}
    for key, val in asdict(cfg).items():
        if isinstance(val, dict):
            prefix = {"hough": "", "face_detect": "face_", "eye_detect": "eye_"}[key]
            flat.update({prefix + k: v for k, v in val.items()})
        else:
            flat[key] = val
    return flat


RESULTS_HEADER = "filename,lx,ly,rx,ry,d_l,d_r,e_worst,e_best,e_avg,method_l,method_r"


def results_csv(results: Sequence[ImageResult]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    buf.write(RESULTS_HEADER + "\n")
    for r in sorted(results, key=lambda r: r.name):
        e = r.errors
        w.writerow([r.name, *r.center_l, *r.center_r,
                    *(f"{v:.6f}" for v in (e.d_l, e.d_r, e.e_worst, e.e_best, e.e_average)),
                    r.method_l, r.method_r])
    return buf.getvalue()
