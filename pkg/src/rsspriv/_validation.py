"""Input validation helpers shared by the estimators."""

from __future__ import annotations

import numpy as np


class DimensionError(ValueError):
    """Raised when array shapes disagree with what an operation expects."""


def check_matrix(x, name="X", min_rows=1) -> np.ndarray:
    """Return ``x`` as a finite 2-D float64 array."""
    arr = np.asarray(x, dtype=np.float64)
    if arr.ndim != 2:
        raise DimensionError(f"{name} must be 2-D, got shape {arr.shape}")
    if arr.shape[0] < min_rows:
        raise DimensionError(f"{name} needs at least {min_rows} rows, got {arr.shape[0]}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains NaN or Inf")
    return arr


def check_labels(labels, n=None, name="labels") -> np.ndarray:
    arr = np.asarray(labels)
    if arr.ndim != 1:
        raise DimensionError(f"{name} must be 1-D, got shape {arr.shape}")
    if not np.issubdtype(arr.dtype, np.integer):
        if not np.all(np.equal(np.mod(arr, 1), 0)):
            raise ValueError(f"{name} must be integer class labels")
        arr = arr.astype(np.int64)
    if n is not None and arr.shape[0] != n:
        raise DimensionError(f"{name} has length {arr.shape[0]}, expected {n}")
    if arr.size and arr.min() < 0:
        raise ValueError(f"{name} must be non-negative")
    return arr


def check_same_shape(a: np.ndarray, b: np.ndarray, names=("x", "y")) -> None:
    if a.shape != b.shape:
        raise DimensionError(f"{names[0]} shape {a.shape} != {names[1]} shape {b.shape}")


def check_width(x: np.ndarray, width: int, name="X") -> None:
    if x.shape[1] != width:
        raise DimensionError(f"{name} has {x.shape[1]} columns, expected {width}")


def as_rng(seed) -> np.random.Generator:
    """Turn ``None``, an int, a SeedSequence or a Generator into a Generator."""
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)
