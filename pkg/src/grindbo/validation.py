"""Input-validation helpers shared by the estimator and the engine."""

from __future__ import annotations

import numbers

import numpy as np


def check_matrix(X, name: str = "X", n_features: int | None = None) -> np.ndarray:
    """Coerce to a finite float 2-D array of shape (n_samples, n_features)."""
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X.reshape(-1, 1)
    if X.ndim != 2:
        raise ValueError(f"{name} must be 2-D (n_samples, n_features), got ndim={X.ndim}")
    if X.size and not np.all(np.isfinite(X)):
        raise ValueError(f"{name} contains non-finite values")
    if n_features is not None and X.shape[1] != n_features:
        raise ValueError(f"{name} has {X.shape[1]} features, expected {n_features}")
    return X


def check_vector(y, name: str = "y", length: int | None = None) -> np.ndarray:
    """Coerce to a finite float 1-D array."""
    y = np.asarray(y, dtype=float).ravel()
    if y.size and not np.all(np.isfinite(y)):
        raise ValueError(f"{name} contains non-finite values")
    if length is not None and y.size != length:
        raise ValueError(f"{name} has length {y.size}, expected {length}")
    return y


def check_positive_scalar(value, name: str) -> float:
    if not isinstance(value, numbers.Real) or not np.isfinite(value) or value <= 0:
        raise ValueError(f"{name} must be a finite positive number, got {value!r}")
    return float(value)


def check_probability(value, name: str) -> float:
    if not isinstance(value, numbers.Real) or not (0.0 < value < 1.0):
        raise ValueError(f"{name} must lie strictly in (0, 1), got {value!r}")
    return float(value)


def check_seed(value, name: str = "seed") -> int:
    if not isinstance(value, numbers.Integral) or value < 0:
        raise ValueError(f"{name} must be a non-negative integer, got {value!r}")
    return int(value)
