"""Input validation helpers used at public API boundaries."""

from __future__ import annotations

import numpy as np

from .errors import DataError, DimensionMismatch, EmptySampleSet


def as_feature_matrix(X, *, dim: int | None = None, name: str = "X") -> np.ndarray:
    """Coerce ``X`` to a finite float64 matrix of shape (n, d).

    Accepts a single vector (promoted to one row), a 2-D array, or a
    sequence of equal-length vectors.
    """
    try:
        arr = np.asarray(X, dtype=np.float64)
    except (TypeError, ValueError) as exc:
        raise DimensionMismatch(f"{name}: samples have inconsistent shapes") from exc
    if arr.ndim == 1:
        arr = arr.reshape(1, -1)
    if arr.ndim != 2:
        raise DimensionMismatch(f"{name}: expected 2-D samples, got shape {arr.shape}")
    if arr.size == 0:
        raise EmptySampleSet(f"{name}: empty sample set")
    if dim is not None and arr.shape[1] != dim:
        raise DimensionMismatch(f"{name}: expected dimension {dim}, got {arr.shape[1]}")
    if not np.all(np.isfinite(arr)):
        raise DataError(f"{name}: non-finite feature values")
    return arr


def as_feature_vector(x, *, dim: int | None = None, name: str = "x") -> np.ndarray:
    arr = np.asarray(x, dtype=np.float64).reshape(-1)
    if dim is not None and arr.shape[0] != dim:
        raise DimensionMismatch(f"{name}: expected dimension {dim}, got {arr.shape[0]}")
    if not np.all(np.isfinite(arr)):
        raise DataError(f"{name}: non-finite feature values")
    return arr


def as_labels(y, *, n: int | None = None, name: str = "y") -> np.ndarray:
    arr = np.asarray(y)
    if arr.ndim != 1:
        raise DimensionMismatch(f"{name}: expected a 1-D label array, got shape {arr.shape}")
    if not np.issubdtype(arr.dtype, np.integer):
        cast = arr.astype(np.int64)
        if not np.array_equal(cast, arr):
            raise DataError(f"{name}: labels must be integers")
        arr = cast
    if n is not None and arr.shape[0] != n:
        raise DimensionMismatch(f"{name}: expected {n} labels, got {arr.shape[0]}")
    return arr.astype(np.int64)


def as_square_matrix(m, *, name: str = "m") -> np.ndarray:
    arr = np.asarray(m, dtype=np.float64)
    if arr.ndim != 2 or arr.shape[0] != arr.shape[1]:
        raise DimensionMismatch(f"{name}: expected a square matrix, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise DataError(f"{name}: non-finite matrix entries")
    return arr
