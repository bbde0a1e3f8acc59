"""Minimal NIfTI-1 single-file reader and writer.

Only the fields needed for 3D scalar volumes are interpreted. Streams may be
gzip-compressed; compression is detected from the gzip magic bytes.
"""

import gzip
import struct
import zlib

import numpy as np

from ..exceptions import InputError, NiftiFormatError
from .regions import RegionTable
from .types import LabelMap, Volume

HEADER_SIZE = 348
VOX_OFFSET = 352  # header + 4-byte extension flag

DATATYPES = {
    2: np.dtype(np.uint8),
    4: np.dtype(np.int16),
    8: np.dtype(np.int32),
    16: np.dtype(np.float32),
    64: np.dtype(np.float64),
    512: np.dtype(np.uint16),
}
FLOAT_CODES = {16, 64}

# (name, struct format, offset) for the fields this module reads.
_FIELDS = {
    "sizeof_hdr": ("i", 0),
    "dim": ("8h", 40),
    "datatype": ("h", 70),
    "bitpix": ("h", 72),
    "pixdim": ("8f", 76),
    "vox_offset": ("f", 108),
    "scl_slope": ("f", 112),
    "scl_inter": ("f", 116),
    "descrip": ("80s", 148),
    "qform_code": ("h", 252),
    "sform_code": ("h", 254),
    "quatern": ("3f", 256),
    "qoffset": ("3f", 268),
    "srow": ("12f", 280),
    "magic": ("4s", 344),
}
MAGICS = (b"n+1\x00", b"ni1\x00")


def _maybe_decompress(raw):
    if raw[:2] == b"\x1f\x8b":
        try:
            return gzip.decompress(raw)
        except (OSError, EOFError, zlib.error) as exc:
            raise NiftiFormatError(f"corrupt gzip stream ({exc})", 0) from None
    return raw


def _read_header(buf):
    if len(buf) < HEADER_SIZE:
        raise NiftiFormatError(f"truncated header ({len(buf)} of {HEADER_SIZE} bytes)", len(buf))
    for endian in "<>":
        if struct.unpack_from(endian + "i", buf, 0)[0] == HEADER_SIZE:
            break
    else:
        raise NiftiFormatError("bad sizeof_hdr (expected 348)", 0)
    hdr = {}
    for name, (fmt, offset) in _FIELDS.items():
        values = struct.unpack_from(endian + fmt, buf, offset)
        hdr[name] = values if len(values) > 1 else values[0]
    hdr["endian"] = endian
    return hdr


def _quaternion_affine(hdr):
    b, c, d = (float(v) for v in hdr["quatern"])
    a2 = 1.0 - (b * b + c * c + d * d)
    a = np.sqrt(a2) if a2 > 1e-7 else 0.0
    rot = np.array([
        [a * a + b * b - c * c - d * d, 2 * (b * c - a * d), 2 * (b * d + a * c)],
        [2 * (b * c + a * d), a * a + c * c - b * b - d * d, 2 * (c * d - a * b)],
        [2 * (b * d - a * c), 2 * (c * d + a * b), a * a + d * d - c * c - b * b],
    ])
    pix = np.abs(np.asarray(hdr["pixdim"][1:4], dtype=np.float64))
    qfac = -1.0 if hdr["pixdim"][0] < 0 else 1.0
    aff = np.eye(4)
    aff[:3, :3] = rot * np.array([pix[0], pix[1], pix[2] * qfac])
    aff[:3, 3] = hdr["qoffset"]
    return aff


def _affine(hdr, spacing):
    if hdr["sform_code"] > 0:
        aff = np.eye(4)
        aff[:3, :] = np.asarray(hdr["srow"], dtype=np.float64).reshape(3, 4)
        return aff
    if hdr["qform_code"] > 0:
        return _quaternion_affine(hdr)
    return np.diag([*spacing, 1.0])


def parse_nifti(raw, table=None):
    """Decode a NIfTI-1 byte stream.

    Float datatypes give a :class:`Volume`; integer datatypes give a
    :class:`LabelMap` carrying ``table`` (empty when not supplied), unless
    a non-identity ``scl_slope``/``scl_inter`` turns the values real, in
    which case a :class:`Volume` is returned.

    Raises:
        NiftiFormatError: bad magic, unsupported datatype, non-3D ``dim``,
            bad voxel size or truncated payload. The message carries the
            byte offset of the offending field.
    """
    buf = _maybe_decompress(bytes(raw))
    hdr = _read_header(buf)
    if hdr["magic"] not in MAGICS:
        raise NiftiFormatError("bad magic", 344)
    dim = hdr["dim"]
    if dim[0] != 3:
        raise NiftiFormatError(f"dim[0] is {dim[0]}, expected 3", 40)
    shape = tuple(int(d) for d in dim[1:4])
    if min(shape) < 1:
        raise NiftiFormatError(f"non-positive dimension {shape}", 42)
    code = hdr["datatype"]
    if code not in DATATYPES:
        raise NiftiFormatError(f"unsupported datatype code {code}", 70)
    dtype = DATATYPES[code].newbyteorder(hdr["endian"])

    spacing = tuple(abs(float(p)) for p in hdr["pixdim"][1:4])
    if not all(np.isfinite(s) and s > 0 for s in spacing):
        raise NiftiFormatError(f"invalid voxel size {spacing}", 80)

    vox_offset = int(hdr["vox_offset"])
    if hdr["magic"] == b"ni1\x00" and vox_offset < HEADER_SIZE:
        raise NiftiFormatError("ni1 header without attached image data", 344)
    vox_offset = max(vox_offset, HEADER_SIZE)
    nbytes = int(np.prod(shape)) * dtype.itemsize
    available = len(buf) - vox_offset
    if available < nbytes:
        raise NiftiFormatError(
            f"truncated payload ({max(available, 0)} of {nbytes} bytes)", vox_offset
        )
    data = np.frombuffer(buf, dtype=dtype, count=int(np.prod(shape)), offset=vox_offset)
    data = data.reshape(shape, order="F")

    affine = _affine(hdr, spacing)
    descrip = hdr["descrip"].split(b"\x00", 1)[0].decode("latin-1")
    slope, inter = float(hdr["scl_slope"]), float(hdr["scl_inter"])
    scaled = slope != 0 and not (slope == 1 and inter == 0)
    if not np.all(np.isfinite(affine)):
        raise NiftiFormatError("non-finite affine", 252)

    if code in FLOAT_CODES or scaled:
        values = data.astype(np.float64)
        if scaled:
            values = values * slope + inter
        return Volume(values.astype(np.float32), spacing, affine, descrip)
    return LabelMap(data.astype(np.int32), spacing, affine, table or RegionTable(), descrip)


def _pack_header(volume, code, bitpix):
    hdr = bytearray(HEADER_SIZE)
    struct.pack_into("<i", hdr, 0, HEADER_SIZE)
    struct.pack_into("<8h", hdr, 40, 3, *volume.shape, 1, 1, 1, 1)
    struct.pack_into("<h", hdr, 70, code)
    struct.pack_into("<h", hdr, 72, bitpix)
    struct.pack_into("<8f", hdr, 76, 1.0, *volume.spacing, 0.0, 0.0, 0.0, 0.0)
    struct.pack_into("<f", hdr, 108, float(VOX_OFFSET))
    struct.pack_into("<f", hdr, 112, 1.0)
    struct.pack_into("<f", hdr, 116, 0.0)
    hdr[123] = 2  # xyzt_units: mm
    struct.pack_into("<80s", hdr, 148, volume.description.encode("latin-1", "replace")[:79])
    struct.pack_into("<h", hdr, 252, 0)
    struct.pack_into("<h", hdr, 254, 2)  # sform_code: aligned anat
    struct.pack_into("<12f", hdr, 280, *np.asarray(volume.affine)[:3, :].ravel())
    struct.pack_into("<4s", hdr, 344, b"n+1\x00")
    return bytes(hdr)


def write_nifti(volume, compress=False):
    """Encode a Volume (float32) or LabelMap (int16) as a NIfTI-1 stream.

    Gzip output uses a zero mtime so identical inputs give identical bytes.
    """
    if volume.data.size == 0:
        raise InputError("cannot write a zero-sized volume")
    if isinstance(volume, LabelMap):
        data = volume.data
        if data.max() > np.iinfo(np.int16).max:
            raise InputError(f"label code {int(data.max())} exceeds the int16 range")
        payload = data.astype("<i2")
        header = _pack_header(volume, 4, 16)
    elif isinstance(volume, Volume):
        payload = volume.data.astype("<f4")
        header = _pack_header(volume, 16, 32)
    else:
        raise InputError(f"expected Volume or LabelMap, got {type(volume).__name__}")
    stream = header + b"\x00" * (VOX_OFFSET - HEADER_SIZE) + payload.tobytes(order="F")
    if compress:
        return gzip.compress(stream, compresslevel=6, mtime=0)
    return stream


def read_nifti(path, table=None):
    with open(path, "rb") as fh:
        return parse_nifti(fh.read(), table)


def save_nifti(volume, path):
    path = str(path)
    data = write_nifti(volume, compress=path.endswith(".gz"))
    with open(path, "wb") as fh:
        fh.write(data)


def read_volume(path):
    """Read any supported file as an intensity :class:`Volume`."""
    image = read_nifti(path)
    if isinstance(image, LabelMap):
        return Volume(image.data.astype(np.float32), image.spacing, image.affine, image.description)
    return image


def read_label_map(path, table=None):
    image = read_nifti(path, table)
    if isinstance(image, Volume):
        raise InputError(f"{path}: expected an integer label map, found real-valued data")
    return image
