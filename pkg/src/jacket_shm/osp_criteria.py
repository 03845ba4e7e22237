"""Modal information criteria for candidate sensor subsets.

Every criterion maps a boolean selection over the candidate nodes to a scalar
that the placement optimizers maximize. Each sensor node contributes its three
translational DOFs.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from ._validation import bits_to_str, check_selection
from .modal import ModalData, model_modes
from .structural_model import GlobalMatrices, JacketModel, assemble_global

CRITERIA = ("efi", "ke", "evp", "ie")


@dataclass(frozen=True)
class CriterionContext:
    """Undamaged modal data and the per-node tables derived from it."""

    model: JacketModel
    modal: ModalData
    mass: np.ndarray
    node_rows: np.ndarray = field(init=False, repr=False)
    ke_dof: np.ndarray = field(init=False, repr=False)
    ke_node: np.ndarray = field(init=False, repr=False)
    amplitude: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        rows = np.array([self.model.translation_rows([n]) for n in self.model.candidate_sensor_nodes])
        phi = self.modal.shapes
        ke_dof = phi * (self.mass @ phi) * self.modal.omega**2
        ke_node = ke_dof[rows].sum(axis=1)  # (candidates, modes)
        amplitude = np.linalg.norm(phi[rows], axis=1)
        for name, value in (("node_rows", rows), ("ke_dof", ke_dof),
                            ("ke_node", ke_node), ("amplitude", amplitude)):
            value.setflags(write=False)
            object.__setattr__(self, name, value)

    @classmethod
    def from_model(cls, model: JacketModel, n_modes: int = 6, matrices: GlobalMatrices | None = None):
        matrices = matrices or assemble_global(model)
        return cls(model, model_modes(model, matrices, n_modes), np.asarray(matrices.M))

    @property
    def n_candidates(self):
        return len(self.node_rows)

    @property
    def n_modes(self):
        return self.modal.n_modes

    def phi_rows(self, selection):
        sel = check_selection(selection, self.n_candidates)
        return self.modal.shapes[self.node_rows[sel].ravel()]


def efi_value(selection, ctx: CriterionContext) -> float:
    """log det of the Fisher information Phi_S^T Phi_S; -inf when rank deficient."""
    phi = ctx.phi_rows(selection)
    if phi.shape[0] < ctx.n_modes:
        return -np.inf
    eig = np.linalg.eigvalsh(phi.T @ phi)
    if eig[0] <= 1e-12 * eig[-1]:
        return -np.inf
    return float(np.sum(np.log(eig)))


def efi_projection_diag(ctx: CriterionContext, selection=None) -> np.ndarray:
    """Diagonal of Phi (Phi^T Phi)^-1 Phi^T over the selected translational rows."""
    if selection is None:
        selection = np.ones(ctx.n_candidates, dtype=bool)
    phi = ctx.phi_rows(selection)
    return np.einsum("ij,ij->i", phi @ np.linalg.pinv(phi.T @ phi), phi)


def ke_value(selection, ctx: CriterionContext) -> float:
    sel = check_selection(selection, ctx.n_candidates)
    return float(ctx.ke_node[sel].sum())


def evp_value(selection, ctx: CriterionContext) -> float:
    sel = check_selection(selection, ctx.n_candidates)
    return float(ctx.amplitude[sel].prod(axis=1).sum())


def ie_value(selection, ctx: CriterionContext) -> float:
    """Negative Shannon entropy of the KE share of each selected node."""
    sel = check_selection(selection, ctx.n_candidates)
    ke = ctx.ke_node[sel].sum(axis=1)
    total = ke.sum()
    if total <= 0:
        raise ValueError("selected nodes carry no kinetic energy")
    p = ke / total
    p = p[p > 0]
    return float(np.sum(p * np.log(p)))


_FUNCS = {"efi": efi_value, "ke": ke_value, "evp": evp_value, "ie": ie_value}


def get_criterion(name: str):
    try:
        return _FUNCS[name.lower()]
    except KeyError:
        raise ValueError(f"unknown criterion {name!r}; expected one of {CRITERIA}") from None


def evaluate(name: str, selection, ctx: CriterionContext) -> float:
    return get_criterion(name)(selection, ctx)


def all_subsets(n: int) -> np.ndarray:
    """Every nonempty subset of n candidates as rows of a boolean matrix, by bitmask order."""
    masks = np.arange(1, 2**n)
    return ((masks[:, None] >> np.arange(n)) & 1).astype(bool)


def write_batch_csv(path, records, criterion: str):
    """Rows of (selection bitstring, count, criterion, J)."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["selection", "count", "criterion", "J"])
        for sel, value in records:
            sel = np.asarray(sel, dtype=bool)
            w.writerow([bits_to_str(sel), int(sel.sum()), criterion, repr(float(value))])
