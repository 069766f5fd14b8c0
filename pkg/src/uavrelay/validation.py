"""Input validation helpers shared by the estimators and simulators."""

import math
import numbers

import numpy as np


class GridParseError(ValueError):
    """Raised when a grid file does not follow the text grid format."""

    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class OutOfBoundsError(ValueError):
    """A query or pose lies outside the terrain extent or scenario bounds."""


class PlacementError(RuntimeError):
    """Random placement could not satisfy the scenario constraints."""


def check_positive(value, name):
    if not isinstance(value, numbers.Real) or not math.isfinite(value) or value <= 0:
        raise ValueError(f"{name} must be a finite positive number, got {value!r}")
    return float(value)


def check_nonneg(value, name):
    if not isinstance(value, numbers.Real) or not math.isfinite(value) or value < 0:
        raise ValueError(f"{name} must be a finite non-negative number, got {value!r}")
    return float(value)


def check_fraction(value, name, *, low_open=False, high_open=False):
    """Check ``value`` lies in [0, 1] (ends optionally open)."""
    if not isinstance(value, numbers.Real) or not math.isfinite(value):
        raise ValueError(f"{name} must be a real number in [0, 1], got {value!r}")
    lo_ok = value > 0 if low_open else value >= 0
    hi_ok = value < 1 if high_open else value <= 1
    if not (lo_ok and hi_ok):
        lo = "(" if low_open else "["
        hi = ")" if high_open else "]"
        raise ValueError(f"{name} must lie in {lo}0, 1{hi}, got {value!r}")
    return float(value)


def check_int(value, name, minimum=None):
    if isinstance(value, bool) or not isinstance(value, numbers.Integral):
        raise ValueError(f"{name} must be an integer, got {value!r}")
    if minimum is not None and value < minimum:
        raise ValueError(f"{name} must be >= {minimum}, got {value!r}")
    return int(value)


def check_finite_array(arr, name, ndim=None, dtype=np.float64):
    """Convert to a float array and reject NaN/inf and wrong rank."""
    out = np.asarray(arr, dtype=dtype)
    if ndim is not None and out.ndim != ndim:
        raise ValueError(f"{name} must be {ndim}-dimensional, got shape {out.shape}")
    if not np.all(np.isfinite(out)):
        raise ValueError(f"{name} contains non-finite values")
    return out


def check_same_shape(a, b, name_a="a", name_b="b"):
    if np.shape(a) != np.shape(b):
        raise ValueError(
            f"shape mismatch: {name_a} has shape {np.shape(a)}, {name_b} has shape {np.shape(b)}"
        )
