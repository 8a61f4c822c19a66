"""Thin typed wrappers for nodal and per-triangle data."""
from dataclasses import dataclass

import numpy as np


def _frozen(arr, ndim=None):
    a = np.array(arr, dtype=float)
    if ndim is not None and a.ndim != ndim:
        raise ValueError(f"expected {ndim}-d array, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise ValueError("field values must be finite")
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class ScalarField:
    """Nodal values of a P1 function."""

    values: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "values", _frozen(self.values, 1))

    def __len__(self):
        return self.values.shape[0]


@dataclass(frozen=True, eq=False)
class GradientField:
    """Per-triangle 2-vectors."""

    values: np.ndarray

    def __post_init__(self):
        v = _frozen(self.values, 2)
        if v.shape[1] != 2:
            raise ValueError("gradient field must have shape (nt, 2)")
        object.__setattr__(self, "values", v)

    def __len__(self):
        return self.values.shape[0]


def nodal(x):
    """Plain float array from a ScalarField, BoundaryFunction or array-like."""
    if hasattr(x, "values"):
        x = x.values
    return np.asarray(x, dtype=float)
