"""Input validation helpers shared by mechanisms and estimators.

Out-of-range inputs are rejected, never clamped, so data-preparation bugs
surface instead of silently biasing estimates.
"""

from __future__ import annotations

import numpy as np

#: Encodes a withheld (null) value; ordinary inputs are validated to be
#: non-NaN, so NaN is unambiguous.
NULL = float("nan")


def is_null(x) -> bool | np.ndarray:
    """True where ``x`` is the null marker."""
    return np.isnan(x)


def check_unit_values(values, *, allow_null: bool = False, name: str = "values"):
    """Validate values in [-1, 1] (optionally with NaN nulls).

    Returns ``(array, scalar)`` where ``scalar`` tells whether the caller
    passed a single value rather than an array.
    """
    arr = np.asarray(values, dtype=float)
    scalar = arr.ndim == 0
    nulls = np.isnan(arr)
    if nulls.any() and not allow_null:
        raise ValueError(f"{name} must not contain NaN/null entries")
    real = arr[~nulls] if nulls.any() else arr
    if not np.isfinite(real).all():
        raise ValueError(f"{name} must be finite")
    if real.size and (np.abs(real) > 1.0).any():
        bad = float(real[np.abs(real) > 1.0].flat[0])
        raise ValueError(f"{name} must lie in [-1, 1], got {bad}")
    return arr, scalar


def check_bits(values, *, name: str = "bits"):
    """Validate entries in {0, 1}; returns ``(int array, scalar)``."""
    arr = np.asarray(values)
    scalar = arr.ndim == 0
    arr = arr.astype(np.int64, copy=False)
    if arr.size and not np.isin(arr, (0, 1)).all():
        raise ValueError(f"{name} must be 0 or 1")
    return arr, scalar
