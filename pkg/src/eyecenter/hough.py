"""Circular Hough transform on binary masks.

Every dark boundary pixel votes, for each radius in range, for all centres
on the digital circle of that radius around it. The digital circle of
radius r is the set of integer offsets whose Euclidean length rounds to r.
Peaks are scored by completeness: votes divided by the size of that set.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Optional, Sequence

import numpy as np

from .imagecore import round_half_up


@dataclass(frozen=True)
class Circle:
    cx: int
    cy: int
    r: int
    score: float = 1.0

    def contains(self, x, y) -> bool:
        """Strictly inside the circle."""
        return (x - self.cx) ** 2 + (y - self.cy) ** 2 < self.r ** 2


@dataclass(frozen=True)
class HoughParams:
    r_min_frac: float = 0.10
    r_max_frac: float = 0.45
    min_completeness: float = 0.35

    def __post_init__(self):
        if not 0 < self.r_min_frac < self.r_max_frac <= 0.5:
            raise ValueError("need 0 < r_min_frac < r_max_frac <= 0.5, got "
                             f"{self.r_min_frac}, {self.r_max_frac}")
        if not 0 < self.min_completeness <= 1:
            raise ValueError(f"min_completeness must be in (0, 1], got {self.min_completeness}")

    def radius_range(self, width: int) -> tuple[int, int]:
        """(r_min, r_max) in pixels for a region ``width`` pixels wide; may be empty."""
        r_min = max(2, int(round_half_up(self.r_min_frac * width)))
        r_max = int(round_half_up(self.r_max_frac * width))
        return r_min, r_max


@dataclass
class HoughAccumulator:
    counts: np.ndarray  # (r_max - r_min + 1, height, width), int64
    r_min: int
    r_max: int
    min_completeness: float

    @property
    def dims(self) -> tuple[int, int]:
        return self.counts.shape[2], self.counts.shape[1]


@lru_cache(maxsize=None)
def ring_offsets(r: int) -> tuple[np.ndarray, np.ndarray]:
    """Offsets (dx, dy) with round(hypot(dx, dy)) == r.

    Integer test: (r - 1/2)^2 <= d^2 < (r + 1/2)^2, i.e.
    4 r^2 - 4 r + 1 <= 4 d^2 < 4 r^2 + 4 r + 1 (d^2 is never a half-square).
    """
    d = np.arange(-r - 1, r + 2)
    dx, dy = np.meshgrid(d, d)
    q = 4 * (dx * dx + dy * dy)
    sel = (q >= 4 * r * r - 4 * r + 1) & (q < 4 * r * r + 4 * r + 1)
    return dx[sel], dy[sel]


def perimeter_count(r: int) -> int:
    return ring_offsets(r)[0].size


def boundary_pixels(binary) -> list[tuple[int, int]]:
    """Dark pixels with a bright 4-neighbour (off-image counts as bright), row-major."""
    b = np.asarray(binary)
    dark = np.pad(b == 0, 1, constant_values=False)
    core = dark[1:-1, 1:-1]
    interior = dark[:-2, 1:-1] & dark[2:, 1:-1] & dark[1:-1, :-2] & dark[1:-1, 2:]
    ys, xs = np.nonzero(core & ~interior)
    return list(zip(xs.tolist(), ys.tolist()))


def accumulate(points: Sequence[tuple[int, int]], dims: tuple[int, int],
               params: HoughParams = HoughParams()) -> HoughAccumulator:
    """Vote volume for centres inside a ``dims = (width, height)`` region."""
    w, h = dims
    r_min, r_max = params.radius_range(w)
    if r_min > r_max:
        raise ValueError(f"empty radius range [{r_min}, {r_max}] for width {w}")
    nr = r_max - r_min + 1
    counts = np.zeros((nr, h, w), dtype=np.int64)
    if len(points):
        pts = np.asarray(points, dtype=np.int64).reshape(-1, 2)
        px, py = pts[:, 0], pts[:, 1]
        for k, r in enumerate(range(r_min, r_max + 1)):
            dx, dy = ring_offsets(r)
            cx = (px[:, None] + dx[None, :]).ravel()
            cy = (py[:, None] + dy[None, :]).ravel()
            ok = (cx >= 0) & (cx < w) & (cy >= 0) & (cy < h)
            counts[k] = np.bincount(cy[ok] * w + cx[ok], minlength=w * h).reshape(h, w)
    return HoughAccumulator(counts, r_min, r_max, params.min_completeness)


def _select(counts: np.ndarray, r_min: int, min_completeness: float) -> Optional[Circle]:
    """Pick the best (r, cy, cx) cell of a count volume.

    Max score, then higher raw count, then smaller r, then row-major (cy, cx).
    """
    nr = counts.shape[0]
    perim = np.array([perimeter_count(r_min + k) for k in range(nr)], dtype=np.float64)
    score = counts / perim[:, None, None]
    best = score.max(initial=0.0)
    if best <= 0 or best < min_completeness:
        return None
    cand = np.argwhere(score == best)  # rows sorted by (r, cy, cx)
    cnt = counts[cand[:, 0], cand[:, 1], cand[:, 2]]
    k, cy, cx = cand[np.flatnonzero(cnt == cnt.max())[0]]
    return Circle(int(cx), int(cy), int(r_min + k), float(best))


def best_circle(acc: HoughAccumulator) -> Optional[Circle]:
    return _select(acc.counts, acc.r_min, acc.min_completeness)


def hough_circle(binary, params: HoughParams = HoughParams()) -> Optional[Circle]:
    """boundary_pixels -> accumulate -> best_circle; None if the radius range is empty."""
    b = np.asarray(binary)
    h, w = b.shape
    r_min, r_max = params.radius_range(w)
    if r_min > r_max:
        return None
    return best_circle(accumulate(boundary_pixels(b), (w, h), params))


def oracle_best_circle(points: Sequence[tuple[int, int]], dims: tuple[int, int],
                       params: HoughParams = HoughParams()) -> Optional[Circle]:
    """Exhaustive reference for small instances (about 64x64, 40 radii).

    Scores each (cx, cy, r) by counting points whose distance to the centre
    rounds to r, using floating-point hypot rather than the integer ring
    tables the accumulator uses.
    """
    w, h = dims
    r_min, r_max = params.radius_range(w)
    if r_min > r_max:
        raise ValueError(f"empty radius range [{r_min}, {r_max}] for width {w}")
    nr = r_max - r_min + 1
    ys, xs = np.mgrid[0:h, 0:w]
    cells = []
    for px, py in points:
        dist = np.floor(np.hypot(xs - px, ys - py) + 0.5).astype(np.int64).ravel()
        cells.append((dist - r_min) * (w * h) + np.arange(w * h))
        cells[-1] = cells[-1][(dist >= r_min) & (dist <= r_max)]
    flat = np.concatenate(cells) if cells else np.zeros(0, dtype=np.int64)
    counts = np.bincount(flat, minlength=nr * w * h)
    perim = []
    for r in range(r_min, r_max + 1):
        # lattice points by brute force, independent of ring_offsets
        perim.append(sum(1 for dy in range(-r - 1, r + 2) for dx in range(-r - 1, r + 2)
                         if math.floor(math.hypot(dx, dy) + 0.5) == r))
    nz = np.flatnonzero(counts)
    if nz.size == 0:
        return None
    k, rest = np.divmod(nz, w * h)
    cy, cx = np.divmod(rest, w)
    c = counts[nz]
    s = c / np.asarray(perim, dtype=np.float64)[k]
    # lexsort: last key is primary
    order = np.lexsort((cx, cy, k, -c, -s))
    i = order[0]
    if s[i] < params.min_completeness:
        return None
    return Circle(int(cx[i]), int(cy[i]), int(r_min + k[i]), float(s[i]))
