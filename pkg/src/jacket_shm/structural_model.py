"""Jacket frame model: geometry, 3D Euler-Bernoulli pipe elements and assembly.

Node and element numbers are 0-based in arrays. Configuration files and
reports use 1-based element numbers (``E3`` is index 2).
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ._validation import ConfigError, check_damage

DOF_PER_NODE = 6
TRANSLATIONS = (0, 1, 2)


@dataclass(frozen=True)
class Material:
    elastic_modulus: float = 210e9
    density: float = 7850.0
    poisson_ratio: float = 0.3

    def __post_init__(self):
        if self.elastic_modulus <= 0 or self.density <= 0:
            raise ConfigError("elastic modulus and density must be positive")
        if not 0 <= self.poisson_ratio < 0.5:
            raise ConfigError("poisson ratio must lie in [0, 0.5)")

    @property
    def shear_modulus(self):
        return self.elastic_modulus / (2.0 * (1.0 + self.poisson_ratio))


@dataclass(frozen=True)
class PipeSection:
    outer_diameter: float = 0.178
    inner_diameter: float = 0.1602

    def __post_init__(self):
        if not 0 <= self.inner_diameter < self.outer_diameter:
            raise ConfigError("pipe section needs 0 <= inner diameter < outer diameter")


def section_properties(section: PipeSection) -> tuple[float, float, float]:
    """Area, bending inertia (both axes) and torsion constant of an annulus."""
    do, di = section.outer_diameter, section.inner_diameter
    area = np.pi / 4.0 * (do**2 - di**2)
    inertia = np.pi / 64.0 * (do**4 - di**4)
    return area, inertia, 2.0 * inertia


@dataclass(frozen=True)
class JacketModel:
    """Frame mesh with one material and one pipe section per element.

    ``elements`` rows are ``(node_a, node_b, material_id, section_id)``.
    """

    nodes: np.ndarray
    elements: tuple[tuple[int, int, int, int], ...]
    materials: tuple[Material, ...] = (Material(),)
    sections: tuple[PipeSection, ...] = (PipeSection(),)
    fixed_nodes: frozenset[int] = frozenset()
    candidate_sensor_nodes: tuple[int, ...] = ()
    dof_map: dict[tuple[int, int], int] = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        nodes = np.asarray(self.nodes, dtype=float)
        if nodes.ndim != 2 or nodes.shape[1] != 3:
            raise ConfigError("nodes must be an (n, 3) coordinate array")
        nodes.setflags(write=False)
        object.__setattr__(self, "nodes", nodes)
        n = len(nodes)
        for e, (a, b, mat, sec) in enumerate(self.elements):
            if not (0 <= a < n and 0 <= b < n):
                raise ConfigError(f"element {e + 1} references a missing node")
            if not (0 <= mat < len(self.materials) and 0 <= sec < len(self.sections)):
                raise ConfigError(f"element {e + 1} references a missing material or section")
            if np.linalg.norm(nodes[b] - nodes[a]) <= 0:
                raise ConfigError(f"element {e + 1} has zero length")
        if any(not 0 <= i < n for i in self.fixed_nodes):
            raise ConfigError("fixed node out of range")
        bad = [i for i in self.candidate_sensor_nodes if i in self.fixed_nodes or not 0 <= i < n]
        if bad:
            raise ConfigError(f"candidate sensor nodes {bad} are fixed or missing")
        dof_map = {}
        for i in range(n):
            if i in self.fixed_nodes:
                continue
            for d in range(DOF_PER_NODE):
                dof_map[(i, d)] = len(dof_map)
        if not dof_map:
            raise ConfigError("model has no free degrees of freedom")
        object.__setattr__(self, "dof_map", dof_map)

    @property
    def n_elements(self):
        return len(self.elements)

    @property
    def n_free_dof(self):
        return len(self.dof_map)

    @property
    def free_nodes(self):
        return [i for i in range(len(self.nodes)) if i not in self.fixed_nodes]

    def element_length(self, e):
        a, b = self.elements[e][:2]
        return float(np.linalg.norm(self.nodes[b] - self.nodes[a]))

    def translation_rows(self, node_ids) -> np.ndarray:
        """Free-DOF indices of the three translations of each node, node-major."""
        return np.array([self.dof_map[(i, d)] for i in node_ids for d in TRANSLATIONS])

    def dof_labels(self):
        labels = [None] * self.n_free_dof
        for key, idx in self.dof_map.items():
            labels[idx] = key
        return labels

    def unconstrained(self) -> "JacketModel":
        return JacketModel(self.nodes, self.elements, self.materials, self.sections,
                           frozenset(), self.candidate_sensor_nodes)

    def to_dict(self):
        return {
            "nodes": self.nodes.tolist(),
            "elements": [list(e) for e in self.elements],
            "materials": [vars(m) for m in self.materials],
            "sections": [vars(s) for s in self.sections],
            "fixed_nodes": sorted(self.fixed_nodes),
            "candidate_sensor_nodes": list(self.candidate_sensor_nodes),
        }

    @classmethod
    def from_dict(cls, data):
        try:
            materials = data.get("materials") or [data["material"]]
            sections = data.get("sections") or [data["section"]]
            return cls(
                nodes=np.asarray(data["nodes"], dtype=float),
                elements=tuple(tuple(int(v) for v in e) for e in data["elements"]),
                materials=tuple(Material(**m) for m in materials),
                sections=tuple(PipeSection(**s) for s in sections),
                fixed_nodes=frozenset(int(i) for i in data.get("fixed_nodes", [])),
                candidate_sensor_nodes=tuple(int(i) for i in data.get("candidate_sensor_nodes", [])),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError(f"malformed model description: {exc}") from exc

    def save(self, path):
        Path(path).write_text(json.dumps(self.to_dict(), indent=2))

    @classmethod
    def load(cls, path):
        path = Path(path)
        if not path.is_file():
            raise ConfigError(f"model file not found: {path}")
        return cls.from_dict(json.loads(path.read_text()))


DEFAULT_ELEVATIONS = (0.0, 3.05, 6.10, 9.14)
DEFAULT_SIDES = (10.97, 8.53, 6.10, 3.66)


def build_default_jacket(config: dict | None = None) -> JacketModel:
    """Four-deck square jacket: 16 nodes, 36 pipe elements, clamped mudline.

    Recognised overrides: ``elevations``, ``side_lengths``, ``material``,
    ``section`` (dicts of field values), ``fixed_decks`` (deck indices,
    bottom deck is 0) and ``candidate_sensor_nodes``.
    """
    config = dict(config or {})
    elevations = tuple(float(z) for z in config.pop("elevations", DEFAULT_ELEVATIONS))
    sides = tuple(float(s) for s in config.pop("side_lengths", DEFAULT_SIDES))
    material = Material(**config.pop("material", {}))
    section = PipeSection(**config.pop("section", {}))
    fixed_decks = tuple(config.pop("fixed_decks", (0,)))
    candidates = config.pop("candidate_sensor_nodes", None)
    if config:
        raise ConfigError(f"unknown jacket overrides: {sorted(config)}")
    if len(elevations) != 4 or len(sides) != 4:
        raise ConfigError("jacket needs exactly four deck elevations and side lengths")
    if any(b <= a for a, b in zip(elevations, elevations[1:])):
        raise ConfigError("deck elevations must be strictly increasing")
    if any(s <= 0 for s in sides):
        raise ConfigError("deck side lengths must be positive")

    corners = np.array([(-1, -1), (1, -1), (1, 1), (-1, 1)], dtype=float) / 2.0
    nodes = np.array([(*(c * s), z) for z, s in zip(elevations, sides) for c in corners])
    node = lambda deck, corner: 4 * deck + corner % 4  # noqa: E731

    legs = [(node(d, c), node(d + 1, c)) for d in range(3) for c in range(4)]
    horizontals = [(node(d, c), node(d, c + 1)) for d in range(1, 4) for c in range(4)]
    diagonals = []
    for bay in range(3):
        for face in range(4):
            if (bay + face) % 2 == 0:
                diagonals.append((node(bay, face), node(bay + 1, face + 1)))
            else:
                diagonals.append((node(bay, face + 1), node(bay + 1, face)))
    key = lambda ab: (min(ab), max(ab))  # noqa: E731
    members = []
    for group in (legs, horizontals, diagonals):
        members += [tuple(sorted(ab)) for ab in sorted(group, key=key)]
    elements = tuple((a, b, 0, 0) for a, b in members)

    fixed = frozenset(node(d, c) for d in fixed_decks for c in range(4))
    if candidates is None:
        candidates = [i for i in range(16) if i not in fixed]
    return JacketModel(nodes, elements, (material,), (section,), fixed, tuple(candidates))


def _rotation(xa, xb):
    ex = (xb - xa) / np.linalg.norm(xb - xa)
    ref = np.array([1.0, 0.0, 0.0]) if abs(ex[2]) > 0.9 else np.array([0.0, 0.0, 1.0])
    ey = np.cross(ref, ex)
    ey /= np.linalg.norm(ey)
    ez = np.cross(ex, ey)
    return np.vstack([ex, ey, ez])


def local_stiffness(E, G, A, Iy, Iz, J, L):
    k = np.zeros((12, 12))
    ea, gj = E * A / L, G * J / L
    k[0, 0] = k[6, 6] = ea
    k[0, 6] = k[6, 0] = -ea
    k[3, 3] = k[9, 9] = gj
    k[3, 9] = k[9, 3] = -gj
    # bending in the local x-y plane: v and theta_z
    for (v1, t1, v2, t2), I, s in (((1, 5, 7, 11), Iz, 1.0), ((2, 4, 8, 10), Iy, -1.0)):
        c = E * I / L**3
        idx = [v1, t1, v2, t2]
        kb = c * np.array([
            [12, 6 * L * s, -12, 6 * L * s],
            [6 * L * s, 4 * L**2, -6 * L * s, 2 * L**2],
            [-12, -6 * L * s, 12, -6 * L * s],
            [6 * L * s, 2 * L**2, -6 * L * s, 4 * L**2],
        ])
        k[np.ix_(idx, idx)] = kb
    return k


def local_mass(rho, A, J, L):
    m = np.zeros((12, 12))
    mass = rho * A * L
    m[np.ix_([0, 6], [0, 6])] = mass / 6.0 * np.array([[2, 1], [1, 2]])
    m[np.ix_([3, 9], [3, 9])] = rho * J * L / 6.0 * np.array([[2, 1], [1, 2]])
    for (v1, t1, v2, t2), s in (((1, 5, 7, 11), 1.0), ((2, 4, 8, 10), -1.0)):
        idx = [v1, t1, v2, t2]
        mb = mass / 420.0 * np.array([
            [156, 22 * L * s, 54, -13 * L * s],
            [22 * L * s, 4 * L**2, 13 * L * s, -3 * L**2],
            [54, 13 * L * s, 156, -22 * L * s],
            [-13 * L * s, -3 * L**2, -22 * L * s, 4 * L**2],
        ])
        m[np.ix_(idx, idx)] = mb
    return m


def element_matrices(model: JacketModel, e: int, alpha: float = 0.0):
    """Global-frame (stiffness, mass) of element ``e`` with stiffness scaled by 1 - alpha."""
    if not 0 <= alpha < 1:
        raise ValueError(f"damage ratio must lie in [0, 1), got {alpha}")
    a, b, mat_id, sec_id = model.elements[e]
    mat, sec = model.materials[mat_id], model.sections[sec_id]
    xa, xb = model.nodes[a], model.nodes[b]
    L = float(np.linalg.norm(xb - xa))
    A, I, J = section_properties(sec)
    r = _rotation(xa, xb)
    T = np.kron(np.eye(4), r)
    k = T.T @ local_stiffness(mat.elastic_modulus, mat.shear_modulus, A, I, I, J, L) @ T
    m = T.T @ local_mass(mat.density, A, J, L) @ T
    k = 0.5 * (k + k.T)
    m = 0.5 * (m + m.T)
    return (1.0 - alpha) * k, m


@dataclass(frozen=True)
class GlobalMatrices:
    K: np.ndarray
    M: np.ndarray


def element_dofs(model: JacketModel, e: int) -> np.ndarray:
    """Free-DOF index per element DOF, -1 where the DOF is clamped."""
    a, b = model.elements[e][:2]
    return np.array([model.dof_map.get((n, d), -1) for n in (a, b) for d in range(DOF_PER_NODE)])


def element_contributions(model: JacketModel):
    """Per-element undamaged (K_e, M_e) scattered to free-DOF size.

    Returned as two arrays of shape (n_elements, n, n); the damaged stiffness
    is ``K_e.sum(0) - tensordot(alpha, K_e, 1)``.
    """
    n = model.n_free_dof
    Ks = np.zeros((model.n_elements, n, n))
    Ms = np.zeros((model.n_elements, n, n))
    for e in range(model.n_elements):
        k, m = element_matrices(model, e)
        dofs = element_dofs(model, e)
        keep = dofs >= 0
        ix = np.ix_(dofs[keep], dofs[keep])
        Ks[e][ix] = k[np.ix_(keep, keep)]
        Ms[e][ix] = m[np.ix_(keep, keep)]
    return Ks, Ms


def assemble_global(model: JacketModel, damage=None) -> GlobalMatrices:
    alpha = check_damage(damage, model.n_elements)
    n = model.n_free_dof
    K = np.zeros((n, n))
    M = np.zeros((n, n))
    for e in range(model.n_elements):
        k, m = element_matrices(model, e, alpha[e])
        dofs = element_dofs(model, e)
        keep = dofs >= 0
        ix = np.ix_(dofs[keep], dofs[keep])
        K[ix] += k[np.ix_(keep, keep)]
        M[ix] += m[np.ix_(keep, keep)]
    K = 0.5 * (K + K.T)
    M = 0.5 * (M + M.T)
    K.setflags(write=False)
    M.setflags(write=False)
    return GlobalMatrices(K, M)


def damage_vector(n_elements: int, damaged: dict | None = None) -> np.ndarray:
    """Dense damage vector from ``{element_number: ratio}`` with 1-based numbers."""
    alpha = np.zeros(n_elements)
    for key, value in (damaged or {}).items():
        number = int(str(key).lstrip("Ee"))
        if not 1 <= number <= n_elements:
            raise ConfigError(f"element number {number} out of range 1..{n_elements}")
        alpha[number - 1] = float(value)
    return check_damage(alpha, n_elements)


def save_damage(path, alpha):
    """Model-update file: the identified damage vector, reloadable with load_damage."""
    payload = {"damage_ratio": {f"E{i + 1}": float(a) for i, a in enumerate(alpha)}}
    Path(path).write_text(json.dumps(payload, indent=2))


def load_damage(path, n_elements: int) -> np.ndarray:
    data = json.loads(Path(path).read_text())
    return damage_vector(n_elements, data["damage_ratio"])
