"""Input validation helpers shared by the estimators and functions."""

import numbers

import numpy as np
from sklearn.utils.validation import check_array

from .exceptions import InputError


def check_triple(value, name, *, positive=True, integer=False):
    """Validate a length-3 sequence and return it as a tuple."""
    try:
        values = tuple(value)
    except TypeError:
        raise InputError(f"{name} must be a sequence of 3 numbers, got {value!r}") from None
    if len(values) != 3:
        raise InputError(f"{name} must have 3 components, got {len(values)}")
    out = []
    for v in values:
        if integer:
            if not isinstance(v, numbers.Integral):
                raise InputError(f"{name} components must be integers, got {value!r}")
            v = int(v)
        else:
            v = float(v)
            if not np.isfinite(v):
                raise InputError(f"{name} components must be finite, got {value!r}")
        if positive and v <= 0:
            raise InputError(f"{name} components must be positive, got {value!r}")
        out.append(v)
    return tuple(out)


def check_samples(X, name="X", *, min_samples=2, dtype=np.float64):
    """2D finite float matrix with at least ``min_samples`` rows."""
    try:
        return check_array(
            X,
            dtype=dtype,
            ensure_2d=True,
            ensure_min_samples=min_samples,
            ensure_all_finite=True,
            input_name=name,
        )
    except ValueError as exc:
        raise InputError(str(exc)) from exc


def check_paired_dims(X, Y):
    if X.shape[1] != Y.shape[1]:
        raise InputError(f"feature dimensions differ: {X.shape[1]} != {Y.shape[1]}")


def check_fraction(value, name, *, open_interval=True):
    value = float(value)
    ok = 0.0 < value < 1.0 if open_interval else 0.0 <= value <= 1.0
    if not ok:
        bounds = "(0, 1)" if open_interval else "[0, 1]"
        raise InputError(f"{name} must lie in {bounds}, got {value}")
    return value


def check_same_shape(volumes, name="volumes"):
    """All volumes share one grid shape; returns that shape."""
    shapes = {tuple(v.shape) for v in volumes}
    if len(shapes) > 1:
        raise InputError(f"{name} have mismatched shapes: {sorted(shapes)}")
    return shapes.pop() if shapes else None
