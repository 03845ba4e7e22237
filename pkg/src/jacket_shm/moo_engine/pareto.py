"""Pareto fronts over (sensor count, criterion value), archive merging and hypervolume."""
from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from .._validation import bits_to_str
from ..osp_criteria import CriterionContext, all_subsets, get_criterion


def dominates(a, b) -> bool:
    """``a`` dominates ``b`` for (count, J) pairs: fewer-or-equal sensors, higher-or-equal J."""
    ca, ja = a
    cb, jb = b
    return ca <= cb and ja >= jb and (ca < cb or ja > jb)


@dataclass(frozen=True)
class FrontEntry:
    selection: np.ndarray
    count: int
    J: float

    @property
    def mask(self):
        return selection_mask(self.selection)


@dataclass
class ParetoFront:
    entries: list = field(default_factory=list)

    def __len__(self):
        return len(self.entries)

    def __iter__(self):
        return iter(self.entries)

    @property
    def counts(self):
        return np.array([e.count for e in self.entries], dtype=int)

    @property
    def values(self):
        return np.array([e.J for e in self.entries], dtype=float)

    def points(self):
        return [(e.count, e.J) for e in self.entries]

    def best_at_budget(self, budget: int) -> FrontEntry | None:
        """Highest-J entry using at most ``budget`` sensors."""
        fits = [e for e in self.entries if e.count <= budget]
        return max(fits, key=lambda e: e.J) if fits else None

    def same_points(self, other: "ParetoFront", rtol=1e-9) -> bool:
        if not np.array_equal(self.counts, other.counts):
            return False
        a, b = self.values, other.values
        both_inf = np.isneginf(a) & np.isneginf(b)
        ok = np.isclose(a, b, rtol=rtol, atol=0.0) | both_inf
        return bool(np.all(ok))

    def write_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["count", "J", "selection"])
            for e in self.entries:
                w.writerow([e.count, repr(float(e.J)), bits_to_str(e.selection)])


def selection_mask(bits) -> int:
    return int(np.dot(np.asarray(bits, dtype=np.int64), 1 << np.arange(len(bits), dtype=np.int64)))


def nondominated(entries) -> list:
    """Mutually non-dominated subset, one entry per count, sorted by count.

    Ties on (count, J) keep the lowest selection mask, so the result does not
    depend on insertion order.
    """
    best = {}
    for e in entries:
        cur = best.get(e.count)
        if cur is None or e.J > cur.J or (e.J == cur.J and e.mask < cur.mask):
            best[e.count] = e
    out = []
    for c in sorted(best):
        e = best[c]
        if not out or e.J > out[-1].J:
            out.append(e)
    return out


def crowding_distance(points) -> np.ndarray:
    """NSGA-II crowding distance of (count, J) points; boundary points get inf."""
    pts = np.asarray(points, dtype=float)
    n = len(pts)
    dist = np.zeros(n)
    if n <= 2:
        return np.full(n, np.inf)
    pts = np.where(np.isneginf(pts), np.nan, pts)
    finite_min = np.nanmin(pts, axis=0)
    pts = np.where(np.isnan(pts), finite_min - 1.0, pts)
    for m in range(pts.shape[1]):
        order = np.argsort(pts[:, m], kind="stable")
        span = pts[order[-1], m] - pts[order[0], m]
        dist[order[0]] = dist[order[-1]] = np.inf
        if span <= 0:
            continue
        dist[order[1:-1]] += (pts[order[2:], m] - pts[order[:-2], m]) / span
    return dist


def merge_archive(archive: list, candidates, capacity: int = 100) -> list:
    front = nondominated(list(archive) + list(candidates))
    while len(front) > capacity:
        cd = crowding_distance([(e.count, e.J) for e in front])
        front.pop(int(np.argmin(cd)))
    return front


class SubsetEvaluator:
    """Criterion evaluations memoized by selection bitmask."""

    def __init__(self, criterion, ctx: CriterionContext):
        self.func = get_criterion(criterion) if isinstance(criterion, str) else criterion
        self.ctx = ctx
        self.cache = {}
        self.calls = 0

    def __call__(self, bits) -> FrontEntry:
        bits = np.asarray(bits, dtype=bool)
        key = selection_mask(bits)
        self.calls += 1
        if key not in self.cache:
            self.cache[key] = self.func(bits, self.ctx)
        return FrontEntry(bits.copy(), int(bits.sum()), self.cache[key])


def exhaustive_front(criterion, ctx: CriterionContext, max_candidates: int = 20) -> ParetoFront:
    """Exact front by enumerating every nonempty subset of the candidates."""
    n = ctx.n_candidates
    if n > max_candidates:
        raise ValueError(f"exhaustive enumeration refused for {n} > {max_candidates} candidates")
    ev = SubsetEvaluator(criterion, ctx)
    return ParetoFront(nondominated(ev(bits) for bits in all_subsets(n)))


def hypervolume_2d(points, ref=(1.1, 1.1)) -> float:
    """Area dominated by minimization points in 2D, bounded by ``ref``."""
    pts = np.asarray(points, dtype=float).reshape(-1, 2)
    pts = pts[(pts[:, 0] < ref[0]) & (pts[:, 1] < ref[1])]
    if len(pts) == 0:
        return 0.0
    pts = pts[np.lexsort((pts[:, 1], pts[:, 0]))]
    area, best_y = 0.0, ref[1]
    xs = list(pts[:, 0]) + [ref[0]]
    for i, (x, y) in enumerate(pts):
        best_y = min(best_y, y)
        area += (xs[i + 1] - x) * (ref[1] - best_y)
    return float(area)


def normalization_bounds(fronts):
    """Per-objective (min, max) over the union of fronts; -inf values are ignored."""
    counts = np.concatenate([f.counts for f in fronts if len(f)]).astype(float)
    values = np.concatenate([f.values for f in fronts if len(f)])
    finite = values[np.isfinite(values)]
    if len(finite) == 0:
        finite = np.array([0.0])
    return (counts.min(), counts.max()), (finite.min(), finite.max())


def _scale(v, lo, hi):
    if hi <= lo:
        return np.full_like(v, 0.5, dtype=float)
    return (v - lo) / (hi - lo)


def hypervolume(front: ParetoFront, all_fronts=None, ref=(1.1, 1.1), bounds=None) -> float:
    """Normalized hypervolume; higher is better.

    Counts and criterion values are scaled to [0, 1] over ``all_fronts`` (or
    explicit ``bounds``), J is flipped to a minimization objective, and
    singular -inf criterion values take the worst finite value.
    """
    if len(front) == 0:
        return 0.0
    if bounds is None:
        bounds = normalization_bounds(list(all_fronts or []) + [front])
    (c_lo, c_hi), (j_lo, j_hi) = bounds
    values = np.where(np.isneginf(front.values), j_lo, front.values)
    x = _scale(front.counts.astype(float), c_lo, c_hi)
    y = 1.0 - _scale(values, j_lo, j_hi)
    return hypervolume_2d(np.column_stack([x, y]), ref)
