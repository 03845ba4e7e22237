"""Generalized eigen-solution, MAC, mode pairing, noise and sensor restriction."""
from __future__ import annotations

import csv
import warnings
from dataclasses import dataclass

import numpy as np
import scipy.linalg as sl

from ._validation import NumericalError, check_random_state, check_selection
from .structural_model import GlobalMatrices, JacketModel

MASS_NORMALIZED = "mass_normalized"
UNIT_NORM = "unit_norm"


@dataclass(frozen=True)
class ModalData:
    frequencies: np.ndarray
    shapes: np.ndarray
    dof_index: tuple = ()
    normalization: str = MASS_NORMALIZED

    @property
    def n_modes(self):
        return len(self.frequencies)

    @property
    def omega(self):
        return 2.0 * np.pi * self.frequencies

    def write_csv(self, path):
        """One row per mode: index, frequency, then one column per DOF row."""
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["mode", "frequency_hz"] + [f"n{n + 1}_d{d + 1}" for n, d in self.dof_index])
            for i in range(self.n_modes):
                w.writerow([i + 1, repr(float(self.frequencies[i]))]
                           + [repr(float(x)) for x in self.shapes[:, i]])


def fix_signs(shapes: np.ndarray) -> np.ndarray:
    """Flip each column so its largest-magnitude entry is positive."""
    idx = np.argmax(np.abs(shapes), axis=0)
    sign = np.sign(shapes[idx, np.arange(shapes.shape[1])])
    sign[sign == 0] = 1.0
    return shapes * sign


def solve_modes(matrices: GlobalMatrices, n_modes: int, dof_index=()) -> ModalData:
    K, M = np.asarray(matrices.K), np.asarray(matrices.M)
    n = K.shape[0]
    if not 0 < n_modes <= n:
        raise ValueError(f"n_modes must lie in 1..{n}")
    try:
        L = np.linalg.cholesky(M)
    except np.linalg.LinAlgError as exc:
        raise NumericalError("mass matrix is not positive definite") from exc
    Linv = sl.solve_triangular(L, np.eye(n), lower=True)
    A = Linv @ K @ Linv.T
    A = 0.5 * (A + A.T)
    try:
        w, y = sl.eigh(A, subset_by_index=[0, n_modes - 1], driver="evr")
    except (np.linalg.LinAlgError, ValueError) as exc:
        raise NumericalError(f"eigen-solver failed: {exc}") from exc
    if not np.all(np.isfinite(w)):
        bad = int(np.argmax(~np.isfinite(w)))
        raise NumericalError(f"eigen-solver did not converge for mode {bad + 1}")
    phi = fix_signs(Linv.T @ y)
    freqs = np.sqrt(np.clip(w, 0.0, None)) / (2.0 * np.pi)
    return ModalData(freqs, phi, tuple(dof_index), MASS_NORMALIZED)


def model_modes(model: JacketModel, matrices: GlobalMatrices, n_modes: int = 6) -> ModalData:
    return solve_modes(matrices, n_modes, model.dof_labels())


def mac(phi_a, phi_b) -> float:
    a = np.asarray(phi_a, dtype=float)
    b = np.asarray(phi_b, dtype=float)
    if a.shape != b.shape:
        raise ValueError("mode vectors must have the same length")
    na, nb = a @ a, b @ b
    if na == 0 or nb == 0:
        raise ValueError("MAC is undefined for a zero vector")
    return float(min((a @ b) ** 2 / (na * nb), 1.0))


def mac_matrix(shapes_a, shapes_b) -> np.ndarray:
    a = shapes_a / np.linalg.norm(shapes_a, axis=0)
    b = shapes_b / np.linalg.norm(shapes_b, axis=0)
    return np.clip((a.T @ b) ** 2, 0.0, 1.0)


@dataclass
class Pairing:
    permutation: np.ndarray
    macs: np.ndarray
    warning: bool = False


def greedy_pairing(macs: np.ndarray) -> np.ndarray:
    """For each reference row in order, the unused column with the highest MAC."""
    n_ref, n_cmp = macs.shape
    used = np.zeros(n_cmp, dtype=bool)
    perm = np.empty(n_ref, dtype=int)
    for i in range(n_ref):
        row = np.where(used, -1.0, macs[i])
        j = int(np.argmax(row))
        perm[i] = j
        used[j] = True
    return perm


def pair_modes(reference: ModalData, computed: ModalData, threshold: float = 0.5) -> Pairing:
    if reference.shapes.shape[0] != computed.shapes.shape[0]:
        raise ValueError("reference and computed modes must share DOF rows")
    if computed.n_modes < reference.n_modes:
        raise ValueError("computed set has fewer modes than the reference")
    macs = mac_matrix(reference.shapes, computed.shapes)
    perm = greedy_pairing(macs)
    paired = macs[np.arange(len(perm)), perm]
    flag = bool(np.any(paired < threshold))
    if flag:
        warnings.warn("mode pairing found a MAC below threshold", RuntimeWarning, stacklevel=2)
    return Pairing(perm, paired, flag)


def unit_normalize(shapes: np.ndarray) -> np.ndarray:
    return shapes / np.linalg.norm(shapes, axis=0)


def add_noise(modal: ModalData, eps_f: float, eta_phi: float, rng_seed) -> ModalData:
    """Multiplicative Gaussian noise on frequencies and shape entries, then unit-normalize."""
    if eps_f < 0 or eta_phi < 0:
        raise ValueError("noise levels must be non-negative")
    rng = check_random_state(rng_seed)
    f = modal.frequencies * (1.0 + rng.standard_normal(modal.n_modes) * eps_f)
    phi = modal.shapes * (1.0 + rng.standard_normal(modal.shapes.shape) * eta_phi)
    return ModalData(f, unit_normalize(phi), modal.dof_index, UNIT_NORM)


def sensor_rows(model: JacketModel, selection) -> np.ndarray:
    sel = check_selection(selection, len(model.candidate_sensor_nodes))
    nodes = [n for n, s in zip(model.candidate_sensor_nodes, sel) if s]
    return model.translation_rows(nodes)


def restrict_to_sensors(modal: ModalData, selection, model: JacketModel) -> ModalData:
    """Keep the translational rows of selected nodes; columns re-normalized to unit length."""
    rows = sensor_rows(model, selection)
    labels = model.dof_labels()
    return ModalData(modal.frequencies.copy(), unit_normalize(modal.shapes[rows]),
                     tuple(labels[r] for r in rows), UNIT_NORM)

