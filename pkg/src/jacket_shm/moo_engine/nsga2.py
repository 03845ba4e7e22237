"""NSGA-II on continuous genes binarized through the v-shaped transfer."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .._validation import check_random_state
from ..osp_criteria import CriterionContext
from .lichtenberg import binarize
from .pareto import ParetoFront, SubsetEvaluator, nondominated


@dataclass(frozen=True)
class Nsga2Params:
    pop: int = 200
    generations: int = 100
    crossover_prob: float = 0.8
    mutation_prob: float = 0.6
    mutation_strength: float = 0.1
    seed: int = 0
    scale: float = 2.0

    def __post_init__(self):
        if self.pop <= 0 or self.generations < 0:
            raise ValueError("population must be positive and generations non-negative")
        for p in (self.crossover_prob, self.mutation_prob):
            if not 0 <= p <= 1:
                raise ValueError("probabilities must lie in [0, 1]")


def _objectives(entries):
    # both minimized: sensor count and -J (singular -inf J becomes +inf)
    return np.array([(e.count, -e.J) for e in entries], dtype=float)


def fast_nondominated_sort(objs) -> list:
    """Fronts of indices for minimization objectives, best front first."""
    objs = np.asarray(objs, dtype=float)
    n = len(objs)
    le = np.all(objs[:, None, :] <= objs[None, :, :], axis=2)
    lt = np.any(objs[:, None, :] < objs[None, :, :], axis=2)
    dom = le & lt  # dom[p, q]: p dominates q
    n_dom = dom.sum(axis=0)
    fronts = []
    current = np.flatnonzero(n_dom == 0)
    while len(current):
        fronts.append(current.tolist())
        n_dom = n_dom - dom[current].sum(axis=0)
        n_dom[current] = -1
        current = np.flatnonzero(n_dom == 0)
    return fronts


def crowding(objs) -> np.ndarray:
    objs = np.asarray(objs, dtype=float)
    n = len(objs)
    dist = np.zeros(n)
    if n <= 2:
        return np.full(n, np.inf)
    finite = np.where(np.isfinite(objs), objs, np.nan)
    fill = np.nanmax(finite, axis=0) + 1.0
    objs = np.where(np.isfinite(objs), objs, fill)
    for m in range(objs.shape[1]):
        order = np.argsort(objs[:, m], kind="stable")
        span = objs[order[-1], m] - objs[order[0], m]
        dist[order[[0, -1]]] = np.inf
        if span > 0:
            dist[order[1:-1]] += (objs[order[2:], m] - objs[order[:-2], m]) / span
    return dist


def rank_and_crowding(objs):
    rank = np.empty(len(objs), dtype=int)
    cd = np.empty(len(objs))
    for r, front in enumerate(fast_nondominated_sort(objs)):
        rank[front] = r
        cd[front] = crowding(objs[front])
    return rank, cd


def tournament(rng, rank, cd, n):
    a = rng.integers(len(rank), size=n)
    b = rng.integers(len(rank), size=n)
    better_a = (rank[a] < rank[b]) | ((rank[a] == rank[b]) & (cd[a] >= cd[b]))
    return np.where(better_a, a, b)


def nsga2_optimize(criterion, ctx: CriterionContext, params: Nsga2Params = Nsga2Params(),
                   initial=None) -> ParetoFront:
    """Evolve genes in [0, 1]^n; each is evaluated on binarize(scale * (2 g - 1))."""
    rng = check_random_state(params.seed)
    n = ctx.n_candidates
    ev = SubsetEvaluator(criterion, ctx)

    def evaluate(genes):
        return [ev(binarize(params.scale * (2.0 * g - 1.0), rng)) for g in genes]

    genes = rng.uniform(size=(params.pop, n)) if initial is None else np.array(initial, dtype=float)
    entries = evaluate(genes)
    objs = _objectives(entries)
    rank, cd = rank_and_crowding(objs)
    for _ in range(params.generations):
        parents = genes[tournament(rng, rank, cd, 2 * params.pop)]
        pa, pb = parents[: params.pop], parents[params.pop:]
        mask = rng.random((params.pop, n)) < 0.5
        do_x = rng.random(params.pop) < params.crossover_prob
        children = np.where(do_x[:, None] & mask, pb, pa)
        mutate = rng.random((params.pop, n)) < params.mutation_prob
        noise = rng.normal(0.0, params.mutation_strength, size=(params.pop, n))
        children = np.clip(children + mutate * noise, 0.0, 1.0)

        all_genes = np.vstack([genes, children])
        all_entries = entries + evaluate(children)
        all_objs = np.vstack([objs, _objectives(all_entries[len(entries):])])
        keep = []
        for front in fast_nondominated_sort(all_objs):
            if len(keep) + len(front) <= params.pop:
                keep.extend(front)
                continue
            d = crowding(all_objs[front])
            order = np.argsort(-d, kind="stable")
            keep.extend(np.asarray(front)[order[: params.pop - len(keep)]].tolist())
            break
        genes = all_genes[keep]
        entries = [all_entries[i] for i in keep]
        objs = all_objs[keep]
        rank, cd = rank_and_crowding(objs)
    return ParetoFront(nondominated(entries))
