"""Input validation helpers shared by the estimators and functional API."""
from __future__ import annotations

import numpy as np


class ConfigError(ValueError):
    """Invalid model, scenario or run configuration."""


class NumericalError(RuntimeError):
    """Eigen-solution or factorisation failure."""


def check_damage(damage, n_elements: int) -> np.ndarray:
    if damage is None:
        return np.zeros(n_elements)
    alpha = np.asarray(damage, dtype=float)
    if alpha.shape != (n_elements,):
        raise ValueError(f"damage vector must have length {n_elements}, got shape {alpha.shape}")
    if np.any(alpha < 0) or np.any(alpha >= 1) or not np.all(np.isfinite(alpha)):
        raise ValueError("damage ratios must lie in [0, 1)")
    return alpha


def check_selection(bits, n_candidates: int | None = None) -> np.ndarray:
    """Boolean selection vector; at least one sensor must be selected."""
    sel = np.asarray(bits)
    if sel.ndim != 1:
        raise ValueError("sensor selection must be a 1-D bit vector")
    if n_candidates is not None and len(sel) != n_candidates:
        raise ValueError(f"selection has {len(sel)} bits, expected {n_candidates}")
    if not np.all((sel == 0) | (sel == 1)):
        raise ValueError("sensor selection must be binary")
    sel = sel.astype(bool)
    if not sel.any():
        raise ValueError("sensor selection is empty")
    return sel


def check_random_state(seed) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    if seed is None:
        raise ValueError("an explicit seed is required")
    return np.random.default_rng(seed)


def bits_to_str(bits) -> str:
    return "".join("1" if b else "0" for b in bits)


def str_to_bits(text: str) -> np.ndarray:
    return np.array([c == "1" for c in text.strip()], dtype=bool)
