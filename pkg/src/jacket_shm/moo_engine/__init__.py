"""Bi-objective sensor placement: fewest sensors, most modal information."""
from .lichtenberg import (LichtenbergFigure, MolaParams, binarize, build_lichtenberg_figure, flip_bits,
                          mola_optimize)
from .nsga2 import Nsga2Params, nsga2_optimize
from .pareto import (FrontEntry, ParetoFront, dominates, exhaustive_front, hypervolume,
                     hypervolume_2d, merge_archive, nondominated)

ALGORITHMS = ("mola", "nsga2", "exhaustive")


def optimize(algorithm, criterion, ctx, seed=0, **params):
    """Run one placement algorithm by name and return its ParetoFront."""
    if algorithm == "mola":
        return mola_optimize(criterion, ctx, MolaParams(seed=seed, **params))
    if algorithm == "nsga2":
        return nsga2_optimize(criterion, ctx, Nsga2Params(seed=seed, **params))
    if algorithm == "exhaustive":
        return exhaustive_front(criterion, ctx)
    raise ValueError(f"unknown algorithm {algorithm!r}; expected one of {ALGORITHMS}")


__all__ = [
    "ALGORITHMS", "FrontEntry", "LichtenbergFigure", "MolaParams", "Nsga2Params", "ParetoFront",
    "binarize", "build_lichtenberg_figure", "flip_bits", "dominates", "exhaustive_front", "hypervolume",
    "hypervolume_2d", "merge_archive", "mola_optimize", "nondominated", "nsga2_optimize",
    "optimize",
]
