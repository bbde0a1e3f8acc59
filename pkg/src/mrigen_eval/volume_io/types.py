"""Immutable containers for image volumes and label maps."""

from dataclasses import dataclass, field, replace

import numpy as np

from ..exceptions import InputError
from ..validation import check_triple
from .regions import RegionTable


def _frozen(array):
    array = np.array(array, copy=True)
    array.setflags(write=False)
    return array


def _default_affine(spacing):
    return np.diag([*spacing, 1.0])


def _check_grid(data, spacing, affine):
    if data.ndim != 3:
        raise InputError(f"volume data must be 3D, got shape {data.shape}")
    if min(data.shape) < 1:
        raise InputError(f"volume shape must be positive, got {data.shape}")
    spacing = check_triple(spacing, "spacing")
    if affine is None:
        affine = _default_affine(spacing)
    affine = np.asarray(affine, dtype=np.float64)
    if affine.shape != (4, 4) or not np.all(np.isfinite(affine)):
        raise InputError("affine must be a finite 4x4 matrix")
    return spacing, affine


@dataclass(frozen=True, eq=False)
class Volume:
    """A 3D scalar image on a regular grid.

    ``data`` is stored as float32 and is read-only. ``affine`` maps voxel
    indices to world millimetres.
    """

    data: np.ndarray
    spacing: tuple = (1.0, 1.0, 1.0)
    affine: np.ndarray = None
    description: str = ""

    def __post_init__(self):
        data = np.asarray(self.data)
        if not np.issubdtype(data.dtype, np.number) or np.iscomplexobj(data):
            raise InputError(f"volume data must be real-valued, got {data.dtype}")
        data = data.astype(np.float32, copy=False)
        spacing, affine = _check_grid(data, self.spacing, self.affine)
        object.__setattr__(self, "data", _frozen(data))
        object.__setattr__(self, "spacing", spacing)
        object.__setattr__(self, "affine", _frozen(affine))

    @property
    def shape(self):
        return self.data.shape

    def with_data(self, data):
        return replace(self, data=data)


@dataclass(frozen=True, eq=False)
class LabelMap:
    """A 3D grid of non-negative integer region codes (0 is background)."""

    data: np.ndarray
    spacing: tuple = (1.0, 1.0, 1.0)
    affine: np.ndarray = None
    table: RegionTable = field(default_factory=RegionTable)
    description: str = ""

    def __post_init__(self):
        data = np.asarray(self.data)
        if not np.issubdtype(data.dtype, np.integer):
            if np.issubdtype(data.dtype, np.floating) and np.all(np.mod(data, 1) == 0):
                data = data.astype(np.int64)
            else:
                raise InputError(f"label map data must be integer, got {data.dtype}")
        if data.size and data.min() < 0:
            raise InputError("label map codes must be non-negative")
        data = data.astype(np.int32, copy=False)
        spacing, affine = _check_grid(data, self.spacing, self.affine)
        object.__setattr__(self, "data", _frozen(data))
        object.__setattr__(self, "spacing", spacing)
        object.__setattr__(self, "affine", _frozen(affine))

    @property
    def shape(self):
        return self.data.shape

    def with_data(self, data):
        return replace(self, data=data)

    def with_table(self, table):
        return replace(self, table=table)

    def unknown_codes(self):
        """Nonzero codes present in the data but absent from the table."""
        present = np.unique(self.data)
        known = set(self.table.codes)
        return sorted(int(c) for c in present if c != 0 and int(c) not in known)
