"""Input validation helpers used throughout the public API."""

from __future__ import annotations

import numpy as np

from .exceptions import NotFittedError


def as_vector(x, name="x", dtype=float):
    """Coerce to a 1-D float array. (N, 1) columns are accepted and squeezed."""
    arr = np.asarray(x, dtype=dtype)
    if arr.ndim == 2 and arr.shape[1] == 1:
        arr = arr[:, 0]
    if arr.ndim != 1:
        raise ValueError(f"{name} must be one-dimensional, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite values")
    return arr


def check_increasing(times, name="times"):
    times = as_vector(times, name)
    if times.size >= 2 and not np.all(np.diff(times) > 0):
        raise ValueError(f"{name} must be strictly increasing")
    return times


def check_same_length(a, b, name_a="times", name_b="values"):
    if len(a) != len(b):
        raise ValueError(
            f"{name_a} and {name_b} must have equal length "
            f"({len(a)} != {len(b)})"
        )


def check_positive(value, name):
    if not np.all(np.isfinite(value)) or not np.all(np.asarray(value) > 0):
        raise ValueError(f"{name} must be finite and strictly positive")
    return value


def check_odd_window(window, n=None, name="window"):
    window = int(window)
    if window < 3 or window % 2 == 0:
        raise ValueError(f"{name} must be an odd integer >= 3, got {window}")
    if n is not None and window > n:
        raise ValueError(f"{name}={window} exceeds series length {n}")
    return window


def check_is_fitted(estimator, attribute):
    if not hasattr(estimator, attribute):
        raise NotFittedError(
            f"{type(estimator).__name__} is not fitted yet; call fit() first"
        )
