"""Reading and writing NIfTI-1 (.nii/.nii.gz) and MetaImage (.mhd + .raw) volumes.

Scope is deliberately narrow: little-endian scalar volumes with voxel types
int16, float32, uint8 and uint16 (uint16 is used for label maps).  On disk
both formats store voxels x-fastest, which maps onto our (nx, ny, nz)
arrays through Fortran-order reshaping.  Geometry header fields round-trip
bit-exactly where the format permits (NIfTI stores them as float32).
"""
from __future__ import annotations

import gzip
import os
import struct

import numpy as np

from .errors import FormatError
from .grid import BinaryMask, LabelMap, ScalarVolume

# NIfTI-1 datatype codes
_NIFTI_DTYPES = {
    2: np.dtype("<u1"),
    4: np.dtype("<i2"),
    16: np.dtype("<f4"),
    512: np.dtype("<u2"),
}
_NIFTI_CODES = {v: k for k, v in _NIFTI_DTYPES.items()}

_MET_TYPES = {
    "MET_UCHAR": np.dtype("<u1"),
    "MET_SHORT": np.dtype("<i2"),
    "MET_USHORT": np.dtype("<u2"),
    "MET_FLOAT": np.dtype("<f4"),
}
_MET_NAMES = {v: k for k, v in _MET_TYPES.items()}

_HDR_SIZE = 348
_VOX_OFFSET = 352.0


def _open_maybe_gz(path: str, mode: str):
    if str(path).endswith(".gz"):
        if "w" in mode:
            # mtime pinned so identical volumes produce identical bytes
            return gzip.GzipFile(path, mode="wb", mtime=0)
        return gzip.open(path, mode)
    return open(path, mode)


def _pack_nifti_header(dims, spacing, origin, dtype: np.dtype) -> bytes:
    code = _NIFTI_CODES.get(np.dtype(dtype))
    if code is None:
        raise FormatError(f"datatype {dtype} not supported for NIfTI output")
    hdr = bytearray(_HDR_SIZE)
    struct.pack_into("<i", hdr, 0, _HDR_SIZE)
    struct.pack_into("<8h", hdr, 40, 3, dims[0], dims[1], dims[2], 1, 1, 1, 1)
    struct.pack_into("<h", hdr, 70, code)
    struct.pack_into("<h", hdr, 72, np.dtype(dtype).itemsize * 8)
    struct.pack_into("<8f", hdr, 76, 1.0, spacing[0], spacing[1], spacing[2], 0, 0, 0, 0)
    struct.pack_into("<f", hdr, 108, _VOX_OFFSET)
    struct.pack_into("<f", hdr, 112, 1.0)  # scl_slope
    struct.pack_into("<f", hdr, 116, 0.0)  # scl_inter
    struct.pack_into("<B", hdr, 123, 2)  # xyzt_units: mm
    struct.pack_into("<h", hdr, 252, 0)  # qform_code
    struct.pack_into("<h", hdr, 254, 1)  # sform_code: scanner-aligned
    struct.pack_into("<3f", hdr, 268, origin[0], origin[1], origin[2])
    struct.pack_into("<4f", hdr, 280, spacing[0], 0, 0, origin[0])
    struct.pack_into("<4f", hdr, 296, 0, spacing[1], 0, origin[1])
    struct.pack_into("<4f", hdr, 312, 0, 0, spacing[2], origin[2])
    hdr[344:348] = b"n+1\x00"
    return bytes(hdr)


def _read_nifti(path: str) -> ScalarVolume:
    with _open_maybe_gz(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < _HDR_SIZE:
        raise FormatError(f"{path}: file shorter than the 348-byte NIfTI-1 header")
    (sizeof_hdr,) = struct.unpack_from("<i", raw, 0)
    if sizeof_hdr != _HDR_SIZE:
        raise FormatError(
            f"{path}: sizeof_hdr is {sizeof_hdr}, expected 348 "
            "(big-endian or non-NIfTI-1 files are not supported)"
        )
    magic = raw[344:348]
    if magic[:3] not in (b"n+1", b"ni1"):
        raise FormatError(f"{path}: magic is {magic!r}, expected 'n+1' or 'ni1'")
    dim = struct.unpack_from("<8h", raw, 40)
    ndim = dim[0]
    if ndim < 1 or ndim > 7:
        raise FormatError(f"{path}: dim[0] is {ndim}, expected 1..7")
    shape = [max(1, d) for d in dim[1 : ndim + 1]]
    trailing = int(np.prod(shape[3:])) if len(shape) > 3 else 1
    if trailing != 1:
        raise FormatError(f"{path}: dim describes a {ndim}D volume; only 3D scalar volumes are supported")
    shape = (shape + [1, 1, 1])[:3]
    (datatype,) = struct.unpack_from("<h", raw, 70)
    dtype = _NIFTI_DTYPES.get(datatype)
    if dtype is None:
        raise FormatError(f"{path}: datatype code {datatype} not supported "
                          "(expected uint8=2, int16=4, float32=16 or uint16=512)")
    pixdim = struct.unpack_from("<8f", raw, 76)
    spacing = tuple(abs(p) if p != 0 else 1.0 for p in pixdim[1:4])
    (vox_offset,) = struct.unpack_from("<f", raw, 108)
    offset = int(vox_offset) if vox_offset >= _HDR_SIZE else int(_VOX_OFFSET)
    slope, inter = struct.unpack_from("<2f", raw, 112)
    (sform_code,) = struct.unpack_from("<h", raw, 254)
    if sform_code > 0:
        srow = struct.unpack_from("<12f", raw, 280)
        origin = (srow[3], srow[7], srow[11])
    else:
        origin = struct.unpack_from("<3f", raw, 268)

    n = shape[0] * shape[1] * shape[2]
    payload = raw[offset : offset + n * dtype.itemsize]
    if len(payload) != n * dtype.itemsize:
        raise FormatError(f"{path}: data section holds {len(payload)} bytes, "
                          f"expected {n * dtype.itemsize} for dim {tuple(shape)}")
    data = np.frombuffer(payload, dtype=dtype).reshape(shape, order="F")
    if slope not in (0.0, 1.0) or inter != 0.0:
        data = data.astype(np.float32) * np.float32(slope if slope != 0.0 else 1.0) + np.float32(inter)
    return ScalarVolume(np.ascontiguousarray(data), spacing, origin)


def _write_nifti(path: str, data: np.ndarray, spacing, origin) -> None:
    hdr = _pack_nifti_header(data.shape, spacing, origin, data.dtype)
    with _open_maybe_gz(path, "wb") as fh:
        fh.write(hdr)
        fh.write(b"\x00" * 4)  # extension flag
        fh.write(np.asfortranarray(data).tobytes(order="F"))


def _parse_mhd(path: str) -> dict:
    fields = {}
    with open(path, "r") as fh:
        for line in fh:
            line = line.strip()
            if not line or "=" not in line:
                continue
            key, value = line.split("=", 1)
            fields[key.strip()] = value.strip()
    return fields


def _read_mhd(path: str) -> ScalarVolume:
    fields = _parse_mhd(path)
    for key in ("NDims", "DimSize", "ElementType", "ElementDataFile"):
        if key not in fields:
            raise FormatError(f"{path}: required MetaImage field {key} is missing")
    if fields["NDims"] != "3":
        raise FormatError(f"{path}: NDims is {fields['NDims']}, only 3 is supported")
    if fields.get("BinaryDataByteOrderMSB", "False").lower() == "true":
        raise FormatError(f"{path}: BinaryDataByteOrderMSB=True (big-endian) is not supported")
    if fields.get("CompressedData", "False").lower() == "true":
        raise FormatError(f"{path}: CompressedData=True is not supported")
    dtype = _MET_TYPES.get(fields["ElementType"])
    if dtype is None:
        raise FormatError(f"{path}: ElementType {fields['ElementType']} not supported")
    dims = tuple(int(v) for v in fields["DimSize"].split())
    spacing = tuple(float(v) for v in fields.get("ElementSpacing", "1 1 1").split())
    origin = tuple(float(v) for v in fields.get("Offset", "0 0 0").split())
    datafile = fields["ElementDataFile"]
    if datafile == "LOCAL":
        raise FormatError(f"{path}: ElementDataFile=LOCAL (single-file .mha) is not supported")
    rawpath = os.path.join(os.path.dirname(os.path.abspath(path)), datafile)
    n = dims[0] * dims[1] * dims[2]
    with open(rawpath, "rb") as fh:
        payload = fh.read()
    if len(payload) != n * dtype.itemsize:
        raise FormatError(f"{rawpath}: raw file holds {len(payload)} bytes, "
                          f"expected {n * dtype.itemsize} for DimSize {dims}")
    data = np.frombuffer(payload, dtype=dtype).reshape(dims, order="F")
    return ScalarVolume(np.ascontiguousarray(data), spacing, origin)


def _write_mhd(path: str, data: np.ndarray, spacing, origin) -> None:
    name = _MET_NAMES.get(np.dtype(data.dtype))
    if name is None:
        raise FormatError(f"datatype {data.dtype} not supported for MetaImage output")
    rawname = os.path.splitext(os.path.basename(path))[0] + ".raw"
    lines = [
        "ObjectType = Image",
        "NDims = 3",
        "BinaryData = True",
        "BinaryDataByteOrderMSB = False",
        "CompressedData = False",
        "TransformMatrix = 1 0 0 0 1 0 0 0 1",
        f"Offset = {origin[0]:.17g} {origin[1]:.17g} {origin[2]:.17g}",
        f"ElementSpacing = {spacing[0]:.17g} {spacing[1]:.17g} {spacing[2]:.17g}",
        f"DimSize = {data.shape[0]} {data.shape[1]} {data.shape[2]}",
        f"ElementType = {name}",
        f"ElementDataFile = {rawname}",
    ]
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")
    with open(os.path.join(os.path.dirname(os.path.abspath(path)), rawname), "wb") as fh:
        fh.write(np.asfortranarray(data).tobytes(order="F"))


def _storage_dtype(data: np.ndarray) -> np.ndarray:
    """Coerce to a supported on-disk scalar type, preserving values."""
    dt = np.dtype(data.dtype)
    if dt in _NIFTI_CODES:
        return data
    if np.issubdtype(dt, np.bool_):
        return data.astype(np.uint8)
    if np.issubdtype(dt, np.integer):
        lo, hi = (int(data.min()), int(data.max())) if data.size else (0, 0)
        if lo >= 0 and hi <= np.iinfo(np.uint16).max:
            return data.astype(np.uint16)
        if lo >= np.iinfo(np.int16).min and hi <= np.iinfo(np.int16).max:
            return data.astype(np.int16)
        raise FormatError(f"integer range [{lo}, {hi}] does not fit a supported voxel type")
    return data.astype(np.float32)


def load_volume(path: str) -> ScalarVolume:
    """Read a NIfTI-1 or MetaImage scalar volume; HU values are preserved."""
    p = str(path)
    if not os.path.exists(p):
        raise FormatError(f"{p}: file not found")
    if p.endswith((".nii", ".nii.gz")):
        return _read_nifti(p)
    if p.endswith(".mhd"):
        return _read_mhd(p)
    raise FormatError(f"{p}: unsupported extension (expected .nii, .nii.gz or .mhd)")


def save_volume(path: str, volume: ScalarVolume) -> None:
    data = _storage_dtype(volume.data)
    p = str(path)
    if p.endswith((".nii", ".nii.gz")):
        _write_nifti(p, data, volume.spacing, volume.origin)
    elif p.endswith(".mhd"):
        _write_mhd(p, data, volume.spacing, volume.origin)
    else:
        raise FormatError(f"{p}: unsupported extension (expected .nii, .nii.gz or .mhd)")


def load_mask(path: str) -> BinaryMask:
    vol = load_volume(path)
    return BinaryMask(vol.data != 0, vol.spacing, vol.origin)


def save_mask(path: str, mask: BinaryMask) -> None:
    save_volume(path, ScalarVolume(mask.data.astype(np.uint8), mask.spacing, mask.origin))


def load_labels(path: str) -> LabelMap:
    vol = load_volume(path)
    if not np.issubdtype(vol.data.dtype, np.integer):
        raise FormatError(f"{path}: label map must hold integers, found {vol.data.dtype}")
    return LabelMap(vol.data.astype(np.int32), vol.spacing, vol.origin)


def save_labels(path: str, labels: LabelMap) -> None:
    if labels.max_label > np.iinfo(np.uint16).max:
        raise FormatError(f"label {labels.max_label} exceeds the uint16 on-disk range")
    save_volume(path, ScalarVolume(labels.data.astype(np.uint16), labels.spacing, labels.origin))
