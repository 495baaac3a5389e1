"""Input validation helpers shared by estimators and data containers."""

from __future__ import annotations

import numpy as np
from sklearn.exceptions import NotFittedError

__all__ = [
    "as_matrix",
    "as_vector",
    "check_lengths",
    "check_binary",
    "check_weights",
    "check_fitted",
]


def as_matrix(x, name: str = "x") -> np.ndarray:
    """Coerce to a 2-d float array with at least one column."""
    arr = np.asarray(x, dtype=float)
    if arr.ndim == 1:
        arr = arr.reshape(-1, 1)
    if arr.ndim != 2:
        raise ValueError(f"{name} must be 2-dimensional, got shape {arr.shape}")
    if arr.shape[1] < 1:
        raise ValueError(f"{name} must have at least one column")
    return arr


def as_vector(v, name: str = "y") -> np.ndarray:
    arr = np.asarray(v, dtype=float)
    if arr.ndim != 1:
        raise ValueError(f"{name} must be 1-dimensional, got shape {arr.shape}")
    return arr


def check_lengths(*named_arrays) -> int:
    """Check that all (name, array) pairs share a first dimension; return it."""
    n = None
    first = None
    for name, arr in named_arrays:
        m = len(arr)
        if n is None:
            n, first = m, name
        elif m != n:
            raise ValueError(f"{name} has length {m}, expected {n} to match {first}")
    return int(n)


def check_binary(v: np.ndarray, name: str) -> np.ndarray:
    arr = np.asarray(v)
    bad = ~np.isin(arr, (0, 1))
    if np.any(bad):
        i = int(np.flatnonzero(bad)[0])
        raise ValueError(f"{name} must be 0/1; row {i} has value {arr[i]!r}")
    return arr.astype(np.int64)


def check_weights(w, n: int) -> np.ndarray:
    """Validate sample weights: length n, finite, non-negative, not all zero."""
    if w is None:
        return np.ones(n)
    arr = as_vector(w, "sample_weight")
    if len(arr) != n:
        raise ValueError(f"sample_weight has length {len(arr)}, expected {n}")
    if not np.all(np.isfinite(arr)):
        i = int(np.flatnonzero(~np.isfinite(arr))[0])
        raise ValueError(f"sample_weight row {i} is not finite")
    if np.any(arr < 0):
        i = int(np.flatnonzero(arr < 0)[0])
        raise ValueError(f"sample_weight row {i} is negative")
    if not np.any(arr > 0):
        raise ValueError("sample_weight is identically zero")
    return arr


def check_fitted(est, attr: str) -> None:
    if not hasattr(est, attr):
        raise NotFittedError(
            f"{type(est).__name__} is not fitted yet; call fit before predict"
        )
