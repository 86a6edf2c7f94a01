"""Input validation helpers shared across the package."""

from __future__ import annotations

from collections.abc import Iterable

import numpy as np

from . import bitset


def as_rng(seed: int | np.random.Generator | None) -> np.random.Generator:
    """Coerce a seed or generator into a numpy Generator."""
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def as_state(state: int | Iterable[int], num_elements: int | None = None) -> int:
    """Coerce a mask or an iterable of element indices into a state mask."""
    if isinstance(state, (int, np.integer)):
        mask = int(state)
        if mask < 0:
            raise ValueError(f"state mask must be non-negative, got {mask}")
    else:
        members = list(state)
        if len(set(members)) != len(members):
            raise ValueError(f"duplicate elements in state {members}")
        mask = bitset.mask_of(members)
    if num_elements is not None and mask >> num_elements:
        raise ValueError(f"state {bitset.members_of(mask)} has elements >= {num_elements}")
    return mask


def check_adjacency(x: np.ndarray) -> np.ndarray:
    """Validate a square symmetric 0/1 adjacency matrix with an empty diagonal."""
    x = np.asarray(x)
    if x.ndim != 2 or x.shape[0] != x.shape[1]:
        raise ValueError(f"adjacency matrix must be square, got shape {x.shape}")
    if not np.array_equal(x, x.T):
        raise ValueError("adjacency matrix must be symmetric")
    if np.any(np.diag(x) != 0):
        raise ValueError("adjacency matrix must have an empty diagonal (no self-loops)")
    vals = np.unique(x)
    if not np.all(np.isin(vals, (0, 1))):
        raise ValueError("adjacency matrix entries must be 0 or 1")
    return x.astype(bool)


def check_fraction(value: float, name: str) -> float:
    if not 0.0 <= value <= 1.0:
        raise ValueError(f"{name} must be in [0, 1], got {value}")
    return float(value)


def check_positive(value: float, name: str) -> float:
    if value <= 0:
        raise ValueError(f"{name} must be positive, got {value}")
    return value
