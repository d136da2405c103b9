"""Small input-validation helpers, in the spirit of sklearn's check_* utilities."""
from __future__ import annotations

import numpy as np


def check_finite_scalar(name: str, value) -> float:
    v = float(value)
    if not np.isfinite(v):
        raise ValueError(f"{name} must be finite, got {value!r}")
    return v


def check_positive(name: str, value) -> float:
    v = check_finite_scalar(name, value)
    if v <= 0.0:
        raise ValueError(f"{name} must be > 0, got {value!r}")
    return v


def check_nonnegative(name: str, value) -> float:
    v = check_finite_scalar(name, value)
    if v < 0.0:
        raise ValueError(f"{name} must be >= 0, got {value!r}")
    return v


def check_probability(name: str, value, *, open_interval: bool = True) -> float:
    v = check_finite_scalar(name, value)
    if open_interval and not (0.0 < v < 1.0):
        raise ValueError(f"{name} must lie in (0, 1), got {value!r}")
    if not open_interval and not (0.0 <= v <= 1.0):
        raise ValueError(f"{name} must lie in [0, 1], got {value!r}")
    return v


def check_array(name: str, arr, *, ndim: int | None = None) -> np.ndarray:
    out = np.asarray(arr, dtype=float)
    if ndim is not None and out.ndim != ndim:
        raise ValueError(f"{name} must be {ndim}-dimensional, got shape {out.shape}")
    if out.size and not np.all(np.isfinite(out)):
        raise ValueError(f"{name} contains non-finite entries")
    return out
