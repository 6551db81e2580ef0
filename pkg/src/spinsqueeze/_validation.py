"""Exceptions and input-checking helpers shared across the package."""

import math

import numpy as np
from sklearn.utils.validation import column_or_1d


class InvalidArgumentError(ValueError):
    """An argument lies outside the domain of the operation."""


class DegenerateInputError(ValueError):
    """Sample data is too short or too degenerate for the estimator."""


def check_positive(value, name, *, allow_zero=False):
    value = float(value)
    if not math.isfinite(value) or value < 0 or (value == 0 and not allow_zero):
        bound = ">= 0" if allow_zero else "> 0"
        raise InvalidArgumentError(f"{name} must be finite and {bound}, got {value!r}")
    return value


def check_fraction(value, name, *, closed_right=False):
    """Check ``0 <= value < 1`` (or ``<= 1`` when `closed_right`)."""
    value = float(value)
    upper_ok = value <= 1 if closed_right else value < 1
    if not (math.isfinite(value) and value >= 0 and upper_ok):
        interval = "[0, 1]" if closed_right else "[0, 1)"
        raise InvalidArgumentError(f"{name} must lie in {interval}, got {value!r}")
    return value


def check_samples(*arrays, min_length=3):
    """Coerce sample streams to equal-length float vectors.

    Parameters
    ----------
    *arrays : array-like
        One or more 1-d sample streams.
    min_length : int
        Minimum accepted number of samples.

    Returns
    -------
    list of ndarray
    """
    out = []
    for a in arrays:
        try:
            v = column_or_1d(np.asarray(a, dtype=float), warn=False)
        except ValueError as exc:
            raise DegenerateInputError(str(exc)) from exc
        if not np.all(np.isfinite(v)):
            raise DegenerateInputError("sample streams must be finite")
        out.append(v)
    n = len(out[0])
    if any(len(v) != n for v in out):
        raise DegenerateInputError(f"sample streams differ in length: {[len(v) for v in out]}")
    if n < min_length:
        raise DegenerateInputError(f"need at least {min_length} samples, got {n}")
    return out
