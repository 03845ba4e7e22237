"""scikit-learn style estimators wrapping the placement and identification stages."""
from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .damage_bayes import IdentificationProblem, mh_sample, posterior_summary
from .modal import ModalData
from .moo_engine import MolaParams, Nsga2Params, exhaustive_front, mola_optimize, nsga2_optimize
from .moo_engine.pareto import hypervolume
from .osp_criteria import CriterionContext, get_criterion
from .structural_model import JacketModel, assemble_global


class SensorPlacement(BaseEstimator):
    """Bi-objective sensor placement (count vs. modal criterion).

    ``fit`` accepts a JacketModel or a prepared CriterionContext and stores
    the Pareto front in ``front_``.

    >>> from jacket_shm.structural_model import build_default_jacket
    >>> sp = SensorPlacement(criterion="evp", algorithm="exhaustive").fit(build_default_jacket())
    >>> int(sp.select(8).sum())
    8
    """

    def __init__(self, criterion="evp", algorithm="mola", n_modes=6, params=None, random_state=0):
        self.criterion = criterion
        self.algorithm = algorithm
        self.n_modes = n_modes
        self.params = params
        self.random_state = random_state

    def _context(self, X):
        if isinstance(X, CriterionContext):
            return X
        if isinstance(X, JacketModel):
            return CriterionContext.from_model(X, self.n_modes)
        raise TypeError("X must be a JacketModel or CriterionContext")

    def fit(self, X, y=None):
        get_criterion(self.criterion)
        ctx = self._context(X)
        params = dict(self.params or {})
        if self.algorithm == "mola":
            front = mola_optimize(self.criterion, ctx, MolaParams(seed=self.random_state, **params))
        elif self.algorithm == "nsga2":
            front = nsga2_optimize(self.criterion, ctx, Nsga2Params(seed=self.random_state, **params))
        elif self.algorithm == "exhaustive":
            front = exhaustive_front(self.criterion, ctx)
        else:
            raise ValueError(f"unknown algorithm {self.algorithm!r}")
        self.context_ = ctx
        self.front_ = front
        self.n_candidates_ = ctx.n_candidates
        return self

    def select(self, budget=8) -> np.ndarray:
        """Best selection with at most ``budget`` sensors."""
        check_is_fitted(self, "front_")
        entry = self.front_.best_at_budget(budget)
        if entry is None:
            raise ValueError(f"no front entry uses {budget} or fewer sensors")
        return entry.selection.copy()

    def score(self, X=None, y=None, reference=None):
        """Normalized hypervolume of the fitted front, optionally against reference fronts."""
        check_is_fitted(self, "front_")
        return hypervolume(self.front_, list(reference or []))


class DamageIdentifier(BaseEstimator):
    """Posterior damage ratios from measured sensor modes via Metropolis-Hastings.

    ``fit(measured)`` runs the chain; ``damage_`` holds posterior means for
    every element (zero for elements that were not estimated).
    """

    def __init__(self, model=None, selection=None, estimated_elements=None, alpha_max=0.95,
                 sigma=0.01, n_iter=15000, burn_in=5000, random_state=0):
        self.model = model
        self.selection = selection
        self.estimated_elements = estimated_elements
        self.alpha_max = alpha_max
        self.sigma = sigma
        self.n_iter = n_iter
        self.burn_in = burn_in
        self.random_state = random_state

    def fit(self, X: ModalData, y=None):
        if self.model is None or self.selection is None:
            raise ValueError("model and selection must be set before fitting")
        problem = IdentificationProblem(self.model, X, np.asarray(self.selection),
                                        self.estimated_elements, self.alpha_max, self.sigma)
        self.problem_ = problem
        self.chain_ = mh_sample(problem, self.n_iter, self.burn_in, self.random_state)
        self.summary_ = posterior_summary(self.chain_)
        self.damage_ = problem.full_damage(self.summary_.most_probable)
        return self

    def predict(self, X=None):
        """Identified damage vector over all elements."""
        check_is_fitted(self, "damage_")
        return self.damage_.copy()

    def updated_matrices(self):
        check_is_fitted(self, "damage_")
        return assemble_global(self.model, self.damage_)
