"""Geometry checks and the intensity/padding standardization steps."""

from dataclasses import dataclass, field

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin

from ..exceptions import InputError
from ..validation import check_triple
from .types import LabelMap, Volume

STANDARD_SHAPE = (144, 192, 144)
STANDARD_SPACING = (1.0, 1.0, 1.0)


@dataclass(frozen=True)
class GeometryIssue:
    field: str
    expected: object
    observed: object


@dataclass(frozen=True)
class GeometryReport:
    issues: tuple = field(default_factory=tuple)

    @property
    def conforms(self):
        return not self.issues

    def describe(self):
        return "; ".join(f"{i.field}: expected {i.expected}, observed {i.observed}" for i in self.issues)


def validate_geometry(v, expected_shape=STANDARD_SHAPE, expected_spacing=STANDARD_SPACING, tol=1e-3):
    """Compare a volume's grid (and intensity range, for Volumes) to the standard."""
    if tol < 0:
        raise InputError(f"tol must be non-negative, got {tol}")
    expected_shape = check_triple(expected_shape, "expected_shape", integer=True)
    expected_spacing = check_triple(expected_spacing, "expected_spacing")
    issues = []
    for axis, (want, got) in enumerate(zip(expected_shape, v.shape)):
        if want != got:
            issues.append(GeometryIssue(f"shape[{axis}]", want, int(got)))
    for axis, (want, got) in enumerate(zip(expected_spacing, v.spacing)):
        if abs(got - want) > tol:
            issues.append(GeometryIssue(f"spacing[{axis}]", want, got))
    if isinstance(v, Volume):
        lo, hi = float(v.data.min()), float(v.data.max())
        if lo < -1.0 - tol or hi > 1.0 + tol:
            issues.append(GeometryIssue("intensity_range", (-1.0, 1.0), (lo, hi)))
    return GeometryReport(tuple(issues))


def normalize_intensity(v):
    """Affinely rescale intensities so that min maps to -1 and max to +1."""
    data = v.data.astype(np.float64)
    lo, hi = data.min(), data.max()
    if hi == lo:
        raise InputError("cannot normalize a constant volume")
    out = 2.0 * (data - lo) / (hi - lo) - 1.0
    return v.with_data(out.astype(np.float32))


def pad_margins(shape, target):
    margins = []
    for axis, (n, t) in enumerate(zip(shape, target)):
        if t < n:
            raise InputError(f"target {tuple(target)} is smaller than the input {tuple(shape)} on axis {axis}")
        low = (t - n) // 2
        margins.append((low, t - n - low))
    return margins


def pad_to_shape(v, target=STANDARD_SHAPE, fill=None):
    """Center ``v`` inside a grid of shape ``target``.

    Odd margins put the extra voxel on the high-index side. The affine is
    shifted so original voxels keep their world coordinates. ``fill``
    defaults to -1 for intensity volumes and 0 for label maps.
    """
    target = check_triple(target, "target", integer=True)
    margins = pad_margins(v.shape, target)
    if fill is None:
        fill = 0 if isinstance(v, LabelMap) else -1.0
    if all(m == (0, 0) for m in margins):
        return v
    data = np.pad(v.data, margins, mode="constant", constant_values=fill)
    low = np.array([m[0] for m in margins], dtype=np.float64)
    affine = np.array(v.affine, dtype=np.float64)
    affine[:3, 3] -= affine[:3, :3] @ low
    return type(v)(**{**_fields(v), "data": data, "affine": affine})


def _fields(v):
    out = {"spacing": v.spacing, "description": v.description}
    if isinstance(v, LabelMap):
        out["table"] = v.table
    return out


class VolumeStandardizer(TransformerMixin, BaseEstimator):
    """Pad volumes to a standard grid and rescale intensities to [-1, 1].

    Stateless; ``fit`` only validates parameters. Operates on sequences of
    :class:`Volume` and returns a list.
    """

    def __init__(self, target_shape=STANDARD_SHAPE, normalize=True, fill=-1.0):
        self.target_shape = target_shape
        self.normalize = normalize
        self.fill = fill

    def fit(self, X=None, y=None):
        check_triple(self.target_shape, "target_shape", integer=True)
        return self

    def transform(self, X):
        out = []
        for v in X:
            if self.normalize:
                v = normalize_intensity(v)
            out.append(pad_to_shape(v, self.target_shape, self.fill))
        return out
