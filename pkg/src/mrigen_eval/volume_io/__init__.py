"""Reading, writing and standardizing 3D volumes and label maps."""

from .geometry import (
    STANDARD_SHAPE,
    STANDARD_SPACING,
    GeometryIssue,
    GeometryReport,
    VolumeStandardizer,
    normalize_intensity,
    pad_to_shape,
    validate_geometry,
)
from .nifti import (
    parse_nifti,
    read_label_map,
    read_nifti,
    read_volume,
    save_nifti,
    write_nifti,
)
from .regions import RegionEntry, RegionTable, default_region_table
from .types import LabelMap, Volume

__all__ = [
    "STANDARD_SHAPE",
    "STANDARD_SPACING",
    "GeometryIssue",
    "GeometryReport",
    "LabelMap",
    "RegionEntry",
    "RegionTable",
    "Volume",
    "VolumeStandardizer",
    "default_region_table",
    "normalize_intensity",
    "pad_to_shape",
    "parse_nifti",
    "read_label_map",
    "read_nifti",
    "read_volume",
    "save_nifti",
    "validate_geometry",
    "write_nifti",
]
