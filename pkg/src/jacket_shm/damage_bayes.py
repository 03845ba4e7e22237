"""Metropolis-Hastings identification of element damage ratios from modal data."""
from __future__ import annotations

import csv
import logging
import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sl
from scipy.linalg import lapack

from ._validation import check_random_state, check_selection
from .modal import UNIT_NORM, ModalData, add_noise, fix_signs, greedy_pairing, sensor_rows
from .structural_model import JacketModel, element_contributions

log = logging.getLogger(__name__)


class ForwardModel:
    """Fast damaged-model modal solver restricted to sensor rows.

    The pencil (K, M) is reduced once with the Cholesky factor of M, so a
    damaged system only costs one axpy and one symmetric eigen-solve.
    """

    def __init__(self, model: JacketModel, selection, n_modes: int = 6, n_pool: int | None = None):
        self.model = model
        self.selection = check_selection(selection, len(model.candidate_sensor_nodes))
        self.n_modes = n_modes
        self.n_pool = min(n_pool or n_modes + 4, model.n_free_dof)
        Ks, Ms = element_contributions(model)
        M = Ms.sum(0)
        L = np.linalg.cholesky(M)
        Linv = sl.solve_triangular(L, np.eye(len(M)), lower=True)
        self._Ae = np.einsum("ij,ejk,lk->eil", Linv, Ks, Linv)
        self._A0 = self._Ae.sum(0)
        self.rows = sensor_rows(model, self.selection)
        self._P = Linv.T[self.rows]
        self._Linv = Linv

    def stiffness_operator(self, alpha):
        return self._A0 - np.tensordot(alpha, self._Ae, axes=1)

    def modes(self, alpha, n=None):
        """Frequencies (Hz) and unit-norm sensor shapes of the lowest ``n`` modes."""
        n = n or self.n_pool
        A = self.stiffness_operator(alpha)
        # direct LAPACK call; A is symmetric so its transpose is the Fortran-ordered view
        w, y, found, _, info = lapack.dsyevr(A.T, compute_v=1, range="I", il=1, iu=n)
        if info != 0 or found < n:
            raise np.linalg.LinAlgError(f"dsyevr failed (info={info})")
        w, y = w[:n], y[:, :n]
        phi = self._P @ y
        phi /= np.linalg.norm(phi, axis=0)
        return np.sqrt(np.clip(w, 0.0, None)) / (2.0 * np.pi), phi

    def measurement(self, alpha) -> ModalData:
        f, phi = self.modes(alpha, self.n_modes)
        labels = self.model.dof_labels()
        return ModalData(f, fix_signs(phi), tuple(labels[r] for r in self.rows), UNIT_NORM)


def misfit(f_meas, phi_meas, f_model, phi_model):
    """Sum over measured modes of squared relative frequency error plus (1 - MAC).

    Model modes are paired to measured ones by greedy maximum MAC. Both
    shape sets are unit-normalized first, so scaling and sign are irrelevant.
    """
    phi_meas = phi_meas / np.linalg.norm(phi_meas, axis=0)
    phi_model = phi_model / np.linalg.norm(phi_model, axis=0)
    macs = (phi_meas.T @ phi_model) ** 2
    perm = greedy_pairing(macs)
    fa = f_model[perm]
    return float(np.sum(((f_meas - fa) / f_meas) ** 2)
                 + np.sum(1.0 - np.minimum(macs[np.arange(len(perm)), perm], 1.0)))


@dataclass
class IdentificationProblem:
    """Measured sensor modes plus the model and prior they are inverted against.

    ``estimated_elements`` holds 0-based element indices; elements outside it
    stay undamaged. ``sigma`` scales the misfit inside the likelihood
    ``exp(-J / (2 sigma^2))``; ``sigma=1`` is the unweighted form.
    """

    model: JacketModel
    measured: ModalData
    selection: np.ndarray
    estimated_elements: tuple | None = None
    alpha_max: float = 0.95
    sigma: float = 0.01
    n_pool: int | None = None
    forward: ForwardModel = field(init=False, repr=False)

    def __post_init__(self):
        if not 0 < self.alpha_max < 1:
            raise ValueError("alpha_max must lie in (0, 1)")
        if self.sigma <= 0:
            raise ValueError("sigma must be positive")
        if self.estimated_elements is None:
            self.estimated_elements = tuple(range(self.model.n_elements))
        self.estimated_elements = tuple(int(e) for e in self.estimated_elements)
        if not self.estimated_elements:
            raise ValueError("no elements to estimate")
        self.selection = check_selection(self.selection, len(self.model.candidate_sensor_nodes))
        self.forward = ForwardModel(self.model, self.selection, self.measured.n_modes, self.n_pool)
        if len(self.forward.rows) != self.measured.shapes.shape[0]:
            raise ValueError("measured shapes do not match the sensor selection")

    @property
    def n_params(self):
        return len(self.estimated_elements)

    @property
    def lower(self):
        return np.zeros(self.n_params)

    @property
    def upper(self):
        return np.full(self.n_params, self.alpha_max)

    def full_damage(self, params):
        alpha = np.zeros(self.model.n_elements)
        alpha[list(self.estimated_elements)] = params
        return alpha

    def misfit(self, params):
        f, phi = self.forward.modes(self.full_damage(params))
        return misfit(self.measured.frequencies, self.measured.shapes, f, phi)


def log_posterior(params, problem: IdentificationProblem) -> float:
    params = np.asarray(params, dtype=float)
    if np.any(params < 0) or np.any(params > problem.alpha_max):
        return -np.inf
    try:
        J = problem.misfit(params)
    except (np.linalg.LinAlgError, ValueError) as exc:
        log.warning("forward solve failed, sample rejected: %s", exc)
        return -np.inf
    return -0.5 * J / problem.sigma**2


@dataclass
class DamageChain:
    samples: np.ndarray
    burn_in: int
    acceptance_rate: float
    proposal_scales: np.ndarray
    accepted: np.ndarray
    log_post: np.ndarray
    elements: tuple = ()

    @property
    def mean(self):
        return self.samples.mean(axis=0)

    def write_csv(self, path):
        labels = [f"alpha_{e + 1}" for e in self.elements] or [
            f"alpha_{j + 1}" for j in range(self.samples.shape[1])]
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["iteration"] + labels + ["accepted"])
            for i, row in enumerate(self.samples):
                w.writerow([self.burn_in + i + 1] + [repr(float(x)) for x in row]
                           + [int(self.accepted[i])])


def reflect(x, lower, upper):
    """Fold ``x`` back into ``[lower, upper]`` by mirror reflection at the bounds."""
    width = upper - lower
    y = np.mod(x - lower, 2.0 * width)
    return lower + np.where(y > width, 2.0 * width - y, y)


def metropolis(logp, lower, upper, n_iter, burn_in, seed, x0=None,
               initial_scale=0.1, target_rate=0.3, start_temperature=1.0, anneal_fraction=0.6):
    """Component-wise Gaussian random-walk Metropolis with reflected proposals.

    Proposal scales adapt (Robbins-Monro on log scale) during the burn-in
    sweeps only and are frozen afterwards. With ``start_temperature > 1`` the
    burn-in target is ``logp / T`` with T decaying geometrically to 1 over
    the first ``anneal_fraction`` of the burn-in. Returns a DamageChain
    holding the post-burn-in sweeps, which always target ``logp`` itself.
    """
    if n_iter <= burn_in:
        raise ValueError("n_iter must exceed burn_in")
    rng = check_random_state(seed)
    lower = np.asarray(lower, dtype=float)
    upper = np.asarray(upper, dtype=float)
    d = len(lower)
    x = rng.uniform(lower, upper) if x0 is None else np.array(x0, dtype=float)
    lp = logp(x)
    log_scale = np.log(initial_scale * (upper - lower))
    kept = n_iter - burn_in
    samples = np.empty((kept, d))
    accepted = np.zeros(kept, dtype=int)
    trace = np.empty(kept)
    n_acc = 0
    n_anneal = int(anneal_fraction * burn_in)
    for it in range(n_iter):
        adapting = it < burn_in
        # the adaptation clock restarts once the target is back at T = 1
        gain = (it + 1 - (n_anneal if it >= n_anneal else 0)) ** -0.6
        temp = start_temperature ** (1.0 - it / n_anneal) if it < n_anneal else 1.0
        scales = np.exp(log_scale)
        steps = rng.standard_normal(d) * scales
        logu = np.log(rng.uniform(size=d))
        acc_sweep = 0
        for j in range(d):
            old = x[j]
            x[j] = reflect(old + steps[j], lower[j], upper[j])
            lp_new = logp(x)
            ok = logu[j] * temp < lp_new - lp
            if ok:
                lp = lp_new
                acc_sweep += 1
            else:
                x[j] = old
            if adapting:
                log_scale[j] += gain * (float(ok) - target_rate)
        if not adapting:
            k = it - burn_in
            samples[k] = x
            accepted[k] = acc_sweep
            trace[k] = lp
            n_acc += acc_sweep
        log_scale = np.minimum(log_scale, np.log(upper - lower))
    rate = n_acc / (kept * d)
    return DamageChain(samples, burn_in, rate, np.exp(log_scale), accepted, trace)


def mh_sample(problem: IdentificationProblem, n_iter=15000, burn_in=5000, seed=None, **kw) -> DamageChain:
    """Sample the damage posterior; burn-in anneals from the unit-weight misfit (sigma = 1)."""
    kw.setdefault("start_temperature", max(1.0, 1.0 / problem.sigma**2))
    chain = metropolis(lambda p: log_posterior(p, problem), problem.lower, problem.upper,
                       n_iter, burn_in, seed, **kw)
    chain.elements = problem.estimated_elements
    return chain


@dataclass
class PosteriorSummary:
    most_probable: np.ndarray
    ci95: np.ndarray
    kde: list
    elements: tuple = ()
    few_samples: bool = False

    def write_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["element", "mean", "ci_low", "ci_high"])
            for j, mean in enumerate(self.most_probable):
                w.writerow([self._label(j), repr(float(mean)), repr(float(self.ci95[j, 0])),
                            repr(float(self.ci95[j, 1]))])

    def write_kde_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["element", "grid", "density"])
            for j, (grid, dens) in enumerate(self.kde):
                for g, p in zip(grid, dens):
                    w.writerow([self._label(j), repr(float(g)), repr(float(p))])

    def _label(self, j):
        return self.elements[j] + 1 if self.elements else j + 1


def silverman_bandwidth(x):
    x = np.asarray(x, dtype=float)
    iqr = np.subtract(*np.percentile(x, [75, 25]))
    spread = min(np.std(x, ddof=1) if len(x) > 1 else 0.0, iqr / 1.34)
    if spread <= 0:
        spread = max(np.std(x, ddof=1) if len(x) > 1 else 0.0, iqr / 1.34)
    return 0.9 * spread * len(x) ** -0.2


def gaussian_kde_1d(x, n_grid=256):
    x = np.asarray(x, dtype=float)
    h = silverman_bandwidth(x)
    if h <= 0:
        h = 1e-6 * max(1.0, abs(float(x[0])))
    grid = np.linspace(x.min() - 3 * h, x.max() + 3 * h, n_grid)
    dens = np.zeros(n_grid)
    for chunk in np.array_split(x, max(1, len(x) // 2000)):
        dens += np.exp(-0.5 * ((grid[:, None] - chunk[None, :]) / h) ** 2).sum(axis=1)
    dens /= len(x) * h * np.sqrt(2 * np.pi)
    # the grid truncates tails at 3h; renormalize so the table is a density on the grid
    dens /= np.trapezoid(dens, grid)
    return grid, dens


def posterior_summary(chain: DamageChain, n_grid=256) -> PosteriorSummary:
    samples = np.asarray(chain.samples if isinstance(chain, DamageChain) else chain, dtype=float)
    if samples.ndim == 1:
        samples = samples[:, None]
    if len(samples) == 0:
        raise ValueError("chain is empty")
    few = len(samples) < 100
    if few:
        warnings.warn("fewer than 100 kept samples", RuntimeWarning, stacklevel=2)
    mean = samples.mean(axis=0)
    ci = np.percentile(samples, [2.5, 97.5], axis=0).T
    kde = [gaussian_kde_1d(samples[:, j], n_grid) for j in range(samples.shape[1])]
    elements = getattr(chain, "elements", ())
    return PosteriorSummary(mean, ci, kde, tuple(elements), few)


def synthetic_measurement(model, selection, truth, noise, seed, n_modes=6) -> ModalData:
    """Sensor-restricted modes of the damaged model with multiplicative noise."""
    clean = ForwardModel(model, selection, n_modes).measurement(truth)
    return add_noise(clean, noise, noise, seed)


@dataclass
class NoiseStudy:
    rows: list
    level_means: dict
    frequencies: list

    def write_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["noise_level", "replicate", "element", "abs_error"])
            for r in self.rows:
                w.writerow([r[0], r[1], r[2], repr(float(r[3]))])

    def write_frequency_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            n = len(self.frequencies[0][2]) if self.frequencies else 0
            w.writerow(["noise_level", "replicate"] + [f"f{i + 1}_hz" for i in range(n)])
            for level, rep, f in self.frequencies:
                w.writerow([level, rep] + [repr(float(v)) for v in f])


def run_noise_study(model, selection, truth, levels=(0.01, 0.05, 0.10, 0.15), replicates=5,
                    seeds=None, n_iter=15000, burn_in=5000, sigma=None, **problem_kw) -> NoiseStudy:
    """Regenerate noisy data per (level, replicate), sample, record |mean - truth|.

    ``truth`` is a dense damage vector; errors are reported for its nonzero
    entries. ``sigma=None`` ties the likelihood scale to the noise level with
    a floor of 0.01.
    """
    truth = np.asarray(truth, dtype=float)
    damaged = np.flatnonzero(truth)
    if seeds is None:
        seeds = list(range(replicates))
    if len(seeds) != replicates:
        raise ValueError("need one seed per replicate")
    rows, freqs, means = [], [], {}
    for level in levels:
        errs = []
        for rep, seed in enumerate(seeds):
            ss = np.random.SeedSequence([int(seed), int(round(level * 1e6))])
            data_seed, chain_seed = ss.spawn(2)
            measured = synthetic_measurement(model, selection, truth, level, np.random.default_rng(data_seed))
            s = sigma if sigma is not None else max(level, 0.01)
            problem = IdentificationProblem(model, measured, selection, sigma=s, **problem_kw)
            chain = mh_sample(problem, n_iter, burn_in, np.random.default_rng(chain_seed))
            est = problem.full_damage(chain.mean)
            freqs.append((level, rep + 1, measured.frequencies))
            for e in damaged:
                err = abs(est[e] - truth[e])
                rows.append((level, rep + 1, int(e) + 1, err))
                errs.append(err)
            log.info("noise %.3f replicate %d errors %s", level, rep + 1,
                     [round(float(abs(est[e] - truth[e])), 4) for e in damaged])
        means[level] = float(np.mean(errs))
    return NoiseStudy(rows, means, freqs)
