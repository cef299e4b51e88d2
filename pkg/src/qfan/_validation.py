"""Exception types and small input checks shared across modules."""
from __future__ import annotations

import numpy as np
from sklearn.utils.validation import check_array


class QFANError(Exception):
    """Base class for validation failures raised by this package."""


class DimensionError(QFANError, ValueError):
    pass


class ConfigError(QFANError, ValueError):
    pass


class StateError(QFANError, ValueError):
    pass


class InsufficientDataError(QFANError, ValueError):
    pass


class DatasetFormatError(QFANError, ValueError):
    pass


class InvariantViolation(QFANError, AssertionError):
    """A runtime check of a proven identity failed; signals a bug, not bad input."""


def check_images(X, *, name="X", allow_empty=False) -> np.ndarray:
    """2-D finite float matrix of nonnegative pixel intensities."""
    X = check_array(X, dtype=np.float64, ensure_min_samples=0 if allow_empty else 1,
                    input_name=name)
    if X.size and X.min() < 0:
        raise ValueError(f"{name} must be nonnegative")
    return X


def check_matrix(X, *, name="X", n_cols=None) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2:
        raise DimensionError(f"{name} must be 2-D, got shape {X.shape}")
    if n_cols is not None and X.shape[1] != n_cols:
        raise DimensionError(f"{name} must have {n_cols} columns, got {X.shape[1]}")
    return X


def check_positive(value, name) -> float:
    value = float(value)
    if not np.isfinite(value) or value <= 0:
        raise ConfigError(f"{name} must be positive, got {value}")
    return value
