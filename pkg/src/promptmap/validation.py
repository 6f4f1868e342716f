"""Small argument-checking helpers shared across the package."""

from __future__ import annotations

import numpy as np
from sklearn.exceptions import NotFittedError

__all__ = ["NotFittedError", "check_fitted", "as_matrix", "as_vector", "check_positive"]


def check_fitted(estimator, *attrs: str):
    """Raise NotFittedError unless every underscore attribute is present."""
    missing = [a for a in attrs if getattr(estimator, a, None) is None]
    if missing:
        raise NotFittedError(
            f"{type(estimator).__name__} is not fitted yet; call fit() before using this method"
        )


def as_matrix(x, name: str = "X", dtype=np.float64) -> np.ndarray:
    arr = np.asarray(x, dtype=dtype)
    if arr.ndim != 2 or arr.size == 0:
        raise ValueError(f"{name} must be a non-empty 2-D array, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite values")
    return arr


def as_vector(x, name: str = "x", size: int | None = None, dtype=np.float64) -> np.ndarray:
    arr = np.asarray(x, dtype=dtype)
    if arr.ndim != 1 or arr.size == 0:
        raise ValueError(f"{name} must be a non-empty 1-D array, got shape {arr.shape}")
    if size is not None and arr.shape[0] != size:
        raise ValueError(f"{name} must have length {size}, got {arr.shape[0]}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite values")
    return arr


def check_positive(value, name: str):
    if value <= 0:
        raise ValueError(f"{name} must be positive, got {value}")
    return value
