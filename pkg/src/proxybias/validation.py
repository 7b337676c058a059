"""Input validation helpers shared across the package."""
from __future__ import annotations

import numpy as np

from .exceptions import DimensionMismatch, DomainError


def as_float_matrix(values, name: str = "values") -> np.ndarray:
    """Coerce to a finite 2-D float64 array."""
    arr = np.asarray(values, dtype=np.float64)
    if arr.ndim == 1:
        arr = arr[:, None]
    if arr.ndim != 2:
        raise DimensionMismatch(f"{name} must be 1-D or 2-D, got ndim={arr.ndim}")
    if arr.size and not np.isfinite(arr).all():
        raise ValueError(f"{name} must be finite")
    return arr


def as_float_vector(values, name: str = "values") -> np.ndarray:
    """Coerce to a finite 1-D float64 array."""
    arr = np.asarray(values, dtype=np.float64)
    if arr.ndim == 2 and 1 in arr.shape:
        arr = arr.ravel()
    if arr.ndim != 1:
        raise DimensionMismatch(f"{name} must be 1-D, got shape {arr.shape}")
    if arr.size and not np.isfinite(arr).all():
        raise ValueError(f"{name} must be finite")
    return arr


def check_rows(expected: int, arr: np.ndarray, name: str = "values") -> None:
    if arr.shape[0] != expected:
        raise DimensionMismatch(
            f"{name} has {arr.shape[0]} rows, expected {expected}"
        )


def check_open_unit(x: float, name: str) -> float:
    x = float(x)
    if not 0.0 < x < 1.0:
        raise DomainError(f"{name} must lie strictly in (0, 1), got {x}")
    return x


def check_positive(x: float, name: str) -> float:
    x = float(x)
    if not x > 0.0 or not np.isfinite(x):
        raise DomainError(f"{name} must be positive and finite, got {x}")
    return x
