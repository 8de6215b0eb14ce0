"""Input validation helpers used at public API boundaries.

Small ``check_*`` functions in the spirit of scikit-learn's validation
utilities, specialized to this package's data shapes (reward pools,
quality/marginal curves, feature matrices).
"""

from __future__ import annotations

import numbers

import numpy as np

__all__ = [
    "check_probability",
    "check_vector",
    "check_pool",
    "check_curve",
    "check_matrix",
    "check_positive_int",
    "is_binary_pool",
]


def check_probability(value, name: str = "probability") -> float:
    """Validate a scalar probability and return it as a float in [0, 1]."""
    if isinstance(value, bool) or not isinstance(value, numbers.Real):
        raise TypeError(f"{name} must be a real number, got {type(value).__name__}")
    value = float(value)
    if not np.isfinite(value) or not 0.0 <= value <= 1.0:
        raise ValueError(f"{name} must lie in [0, 1], got {value}")
    return value


def check_vector(values, name: str = "array", min_len: int = 1) -> np.ndarray:
    """Coerce to a finite 1-D float array with at least ``min_len`` entries."""
    arr = np.asarray(values, dtype=float)
    if arr.ndim != 1:
        raise ValueError(f"{name} must be 1-dimensional, got shape {arr.shape}")
    if arr.shape[0] < min_len:
        raise ValueError(f"{name} needs at least {min_len} entries, got {arr.shape[0]}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite values")
    return arr


def is_binary_pool(rewards) -> bool:
    """True when every reward is exactly 0 or 1."""
    arr = np.asarray(rewards, dtype=float)
    return bool(np.isin(arr, (0.0, 1.0)).all())


def check_pool(rewards, name: str = "pool", binary: bool = False) -> np.ndarray:
    """Validate a pool of graded outcomes (1-D, nonempty, optionally 0/1)."""
    pool = check_vector(rewards, name=name, min_len=1)
    if binary and not np.isin(pool, (0.0, 1.0)).all():
        raise ValueError(f"{name} must contain only 0/1 rewards")
    return pool


def check_curve(values, name: str = "curve", min_len: int = 1) -> np.ndarray:
    """Validate a quality or marginal-reward curve (finite 1-D floats)."""
    return check_vector(values, name=name, min_len=min_len)


def check_matrix(X, name: str = "X") -> np.ndarray:
    """Coerce to a finite 2-D float array (n_samples, n_features)."""
    arr = np.asarray(X, dtype=float)
    if arr.ndim != 2:
        raise ValueError(
            f"{name} must be 2-dimensional (n_samples, n_features), got shape {arr.shape}"
        )
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite values")
    return arr


def check_positive_int(value, name: str = "value", minimum: int = 1) -> int:
    """Validate an integer >= ``minimum``."""
    if isinstance(value, bool) or not isinstance(value, numbers.Integral):
        raise TypeError(f"{name} must be an integer, got {type(value).__name__}")
    value = int(value)
    if value < minimum:
        raise ValueError(f"{name} must be >= {minimum}, got {value}")
    return value
