"""Lichtenberg figures grown by diffusion-limited aggregation, and the MOLA optimizer."""
from __future__ import annotations

import csv
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .._validation import NumericalError, check_random_state
from ..osp_criteria import CriterionContext
from .pareto import ParetoFront, SubsetEvaluator, crowding_distance, merge_archive

_STEPS = np.array([(1, 0), (-1, 0), (0, 1), (0, -1)])


@dataclass(frozen=True)
class MolaParams:
    pop: int = 100
    Np: int = 900
    Rc: float = 100.0
    S: float = 1.0
    M: int = 0
    ref: float = 0.5
    N_iter: int = 50
    seed: int = 0
    scale: float = 2.0
    capacity: int = 100

    def __post_init__(self):
        if self.pop <= 0 or self.Np <= 0 or self.Rc <= 0 or self.N_iter < 0:
            raise ValueError("pop, Np and Rc must be positive and N_iter non-negative")
        if not 0 < self.S <= 1 or not 0 <= self.ref <= 1:
            raise ValueError("stickiness must lie in (0, 1] and refinement in [0, 1]")
        if self.M != 0:
            raise NotImplementedError("only switching factor M = 0 (one figure per run) is supported")


@dataclass(frozen=True)
class LichtenbergFigure:
    points: np.ndarray  # (Np + 1, 2) integer grid coordinates, origin first

    @property
    def radius(self):
        return float(np.sqrt((self.points.astype(float) ** 2).sum(axis=1)).max())

    def write_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["x", "y"])
            w.writerows(self.points.tolist())


def build_lichtenberg_figure(Np=900, Rc=100.0, S=1.0, seed=0) -> LichtenbergFigure:
    """Grow an on-lattice DLA cluster of ``Np`` particles around the origin.

    Walkers launch on the circle of radius min(Rc, cluster radius + 5), take
    unit lattice steps, stick with probability ``S`` once they touch the
    cluster (8-neighbourhood) and are relaunched after leaving radius 2 Rc.
    Sites beyond ``Rc`` never accept a particle.
    """
    if isinstance(Np, MolaParams):
        p = Np
        return build_lichtenberg_figure(p.Np, p.Rc, p.S, p.seed)
    if Np <= 0 or Rc <= 0 or not 0 < S <= 1:
        raise ValueError("Np and Rc must be positive and S in (0, 1]")
    r = int(np.floor(Rc))
    grid = np.arange(-r, r + 1)
    sites = int(np.count_nonzero(grid[:, None] ** 2 + grid[None, :] ** 2 <= Rc * Rc))
    if Np + 1 > sites // 2:
        raise ValueError(f"{Np} particles do not fit a cluster of radius {Rc} ({sites} lattice sites)")
    return _grow(int(Np), float(Rc), float(S), int(seed))


@lru_cache(maxsize=16)
def _grow(Np, Rc, S, seed) -> LichtenbergFigure:
    rng = np.random.default_rng(seed)
    half = int(np.ceil(2 * Rc)) + 3
    size = 2 * half + 1
    occupied = np.zeros((size, size), dtype=bool)
    near = np.zeros((size, size), dtype=bool)  # occupied or 8-adjacent to occupied

    def add(x, y):
        occupied[x + half, y + half] = True
        near[x + half - 1:x + half + 2, y + half - 1:y + half + 2] = True

    add(0, 0)
    points = [(0, 0)]
    radius = 0.0
    kill2 = (2 * Rc) ** 2
    chunk = 256
    idle = 0  # walkers released since the last particle stuck
    while len(points) <= Np:
        if idle > 20000:
            raise NumericalError(f"aggregation stalled at {len(points)} of {Np + 1} particles")
        idle += 1
        launch = min(Rc, radius + 5.0)
        theta = rng.uniform(0, 2 * np.pi)
        x, y = int(round(launch * np.cos(theta))), int(round(launch * np.sin(theta)))
        if near[x + half, y + half]:
            continue
        stuck = False
        while not stuck:
            # vectorized walk until the first site touching the cluster or escape
            steps = _STEPS[rng.integers(0, 4, size=chunk)]
            path = np.cumsum(steps, axis=0) + (x, y)
            escaped = (path ** 2).sum(axis=1) > kill2
            # off-grid points lie past the kill radius, so clamping only affects escaped steps
            idx = np.clip(path + half, 0, size - 1)
            hit = near[idx[:, 0], idx[:, 1]]
            first_esc = int(np.argmax(escaped)) if escaped.any() else chunk
            first_hit = int(np.argmax(hit)) if hit.any() else chunk
            if first_esc < first_hit:
                break  # relaunch
            if first_hit == chunk:
                x, y = path[-1]
                continue
            x, y = path[first_hit]
            # walker is touching the cluster: try to stick, else keep stepping locally
            while True:
                if occupied[x + half, y + half]:
                    raise AssertionError("walker entered the cluster")  # pragma: no cover
                if x * x + y * y <= Rc * Rc and rng.random() < S:
                    add(x, y)
                    points.append((int(x), int(y)))
                    radius = max(radius, float(np.hypot(x, y)))
                    stuck = True
                    idle = 0
                    break
                dx, dy = _STEPS[rng.integers(0, 4)]
                if occupied[x + dx + half, y + dy + half]:
                    continue
                x, y = x + dx, y + dy
                if x * x + y * y > kill2:
                    break
                if not near[x + half, y + half]:
                    break
            if not stuck and x * x + y * y > kill2:
                break
    pts = np.array(points, dtype=int)
    pts.setflags(write=False)
    return LichtenbergFigure(pts)


def binarize(position, rng) -> np.ndarray:
    """Bit i is set with probability |tanh(x_i)|; an all-zero draw gets one random bit."""
    x = np.asarray(position, dtype=float)
    bits = rng.random(x.shape) < np.abs(np.tanh(x))
    if not bits.any():
        bits[rng.integers(len(bits))] = True
    return bits


def random_unit_vectors(rng, n, dim):
    v = rng.standard_normal((n, dim))
    return v / np.linalg.norm(v, axis=1, keepdims=True)


def transform_figure(points, scale, angle, origin=(0.0, 0.0)):
    """Scale, rotate and translate 2D figure points."""
    c, s = np.cos(angle), np.sin(angle)
    rot = np.array([[c, -s], [s, c]])
    return scale * points @ rot.T + np.asarray(origin)


def flip_bits(bits, step, rng) -> np.ndarray:
    """V-shaped update: bit i of ``bits`` flips with probability |tanh(step_i)|.

    An empty result gets one random bit, as in ``binarize``.
    """
    bits = np.asarray(bits, dtype=bool)
    out = bits ^ (rng.random(bits.shape) < np.abs(np.tanh(np.asarray(step, dtype=float))))
    if not out.any():
        out[rng.integers(len(out))] = True
    return out


def _pick_trigger(archive, rng):
    # binary tournament on crowding distance, ties broken at random
    cd = crowding_distance([(e.count, e.J) for e in archive])
    a, b = rng.integers(len(archive), size=2)
    if cd[a] == cd[b]:
        return archive[(a, b)[rng.integers(2)]]
    return archive[a] if cd[a] > cd[b] else archive[b]


def mola_optimize(criterion, ctx: CriterionContext, params: MolaParams = MolaParams()) -> ParetoFront:
    """Multi-objective Lichtenberg search over binary sensor selections.

    The continuous space is the centred box [-1, 1]^n seen through the
    transfer scale. Each iteration fires ``pop`` points on a randomly scaled
    and rotated copy of one DLA figure centred on a trigger (a lightly
    crowded archive member). 2D figure points are lifted to n dimensions as
    (normalized radius x random unit direction) steps, and each step flips
    the trigger's bits through the v-shaped transfer. A share ``ref`` of the
    points comes from a copy shrunk by ``ref`` for local search.
    """
    rng = check_random_state(params.seed)
    lf_seed = int(rng.integers(2**31))
    figure = build_lichtenberg_figure(params.Np, params.Rc, params.S, lf_seed)
    pts = figure.points.astype(float) / max(figure.radius, 1.0)
    n = ctx.n_candidates
    diag = 2.0 * np.sqrt(n)
    ev = SubsetEvaluator(criterion, ctx)

    init = rng.uniform(-1.0, 1.0, size=(params.pop, n))
    archive = merge_archive([], [ev(binarize(params.scale * x, rng)) for x in init], params.capacity)

    n_local = int(round(params.ref * params.pop))
    for _ in range(params.N_iter):
        trigger = _pick_trigger(archive, rng)
        size = 1.0 - rng.uniform()  # (0, 1]
        angle = rng.uniform(0, 2 * np.pi)
        glob = transform_figure(pts, size * diag, angle)
        local = transform_figure(pts, params.ref * size * diag, angle)
        idx_g = rng.choice(len(pts), size=params.pop - n_local, replace=len(pts) < params.pop)
        idx_l = rng.choice(len(pts), size=n_local, replace=len(pts) < n_local)
        radii = np.concatenate([np.hypot(*glob[idx_g].T), np.hypot(*local[idx_l].T)])
        steps = np.clip(radii[:, None] * random_unit_vectors(rng, len(radii), n), -2.0, 2.0)
        fired = [ev(flip_bits(trigger.selection, params.scale * x, rng)) for x in steps]
        archive = merge_archive(archive, fired, params.capacity)
    return ParetoFront(list(archive))
