"""Minimal single-file NIfTI-1 reader and writer.

Covers exactly what slice extraction needs: .nii / .nii.gz files with the
"n+1" magic, 1-3 spatial dimensions, the common integer and float voxel
types, either endianness, and the scl_slope/scl_inter intensity scaling.
Anything else (hdr/img pairs, NIfTI-2, extensions) is rejected rather
than guessed at.
"""
from __future__ import annotations

import gzip
import struct
import zlib
from pathlib import Path

import numpy as np

from .errors import UnreadableVolume

HEADER_SIZE = 348
# data starts right after the header plus the 4-byte extension flag
DATA_OFFSET = 352

_DTYPES = {
    2: np.uint8,
    4: np.int16,
    8: np.int32,
    16: np.float32,
    64: np.float64,
    256: np.int8,
    512: np.uint16,
    768: np.uint32,
}
_CODES = {np.dtype(d).name: code for code, d in _DTYPES.items()}


def _open_raw(path: Path) -> bytes:
    with open(path, "rb") as f:
        head = f.read(2)
        f.seek(0)
        if head == b"\x1f\x8b":
            with gzip.open(f) as g:
                return g.read()
        return f.read()


def read_nifti(path: str | Path) -> np.ndarray:
    """Voxel array of a single-file NIfTI-1 volume, intensity-scaled,
    shaped (X, Y, Z) for 3D input (trailing singleton axes added for
    1D/2D files)."""
    path = Path(path)
    try:
        raw = _open_raw(path)
    except (OSError, EOFError, zlib.error) as err:
        raise UnreadableVolume(f"{path}: {err}") from err
    if len(raw) < HEADER_SIZE:
        raise UnreadableVolume(f"{path}: truncated header ({len(raw)} bytes)")

    order = "<"
    (sizeof_hdr,) = struct.unpack_from("<i", raw, 0)
    if sizeof_hdr != HEADER_SIZE:
        (sizeof_hdr,) = struct.unpack_from(">i", raw, 0)
        if sizeof_hdr != HEADER_SIZE:
            raise UnreadableVolume(f"{path}: not a NIfTI-1 file (sizeof_hdr)")
        order = ">"

    magic = raw[344:348]
    if magic not in (b"n+1\x00",):
        raise UnreadableVolume(f"{path}: unsupported magic {magic!r} (need single-file n+1)")

    dim = struct.unpack_from(f"{order}8h", raw, 40)
    ndim = dim[0]
    if not 1 <= ndim <= 3:
        raise UnreadableVolume(f"{path}: {ndim}-dimensional data not supported")
    shape = tuple(max(1, dim[1 + i]) for i in range(3))

    (datatype,) = struct.unpack_from(f"{order}h", raw, 70)
    if datatype not in _DTYPES:
        raise UnreadableVolume(f"{path}: unsupported datatype code {datatype}")
    dtype = np.dtype(_DTYPES[datatype]).newbyteorder(order)

    (vox_offset,) = struct.unpack_from(f"{order}f", raw, 108)
    offset = int(vox_offset)
    count = int(np.prod(shape))
    need = offset + count * dtype.itemsize
    if offset < HEADER_SIZE or len(raw) < need:
        raise UnreadableVolume(f"{path}: data region truncated ({len(raw)} < {need} bytes)")

    voxels = np.frombuffer(raw, dtype=dtype, count=count, offset=offset)
    volume = voxels.reshape(shape, order="F").astype(np.float32)

    slope, inter = struct.unpack_from(f"{order}2f", raw, 112)
    if slope != 0.0 and (slope, inter) != (1.0, 0.0):
        volume = volume * slope + inter
    return volume


def write_nifti(volume: np.ndarray, path: str | Path) -> None:
    """Write a 1-3D array as a little-endian single-file NIfTI-1 volume."""
    path = Path(path)
    volume = np.asarray(volume)
    if volume.ndim not in (1, 2, 3):
        raise ValueError(f"need a 1-3D array, got shape {volume.shape}")
    name = volume.dtype.name
    if name not in _CODES:
        volume = volume.astype(np.float32)
        name = "float32"

    header = bytearray(HEADER_SIZE)
    struct.pack_into("<i", header, 0, HEADER_SIZE)
    dim = [volume.ndim, 1, 1, 1, 1, 1, 1, 1]
    for i, n in enumerate(volume.shape):
        dim[1 + i] = n
    struct.pack_into("<8h", header, 40, *dim)
    struct.pack_into("<h", header, 70, _CODES[name])
    struct.pack_into("<h", header, 72, volume.dtype.itemsize * 8)
    struct.pack_into("<8f", header, 76, *([1.0] * 8))  # pixdim
    struct.pack_into("<f", header, 108, float(DATA_OFFSET))
    struct.pack_into("<2f", header, 112, 1.0, 0.0)  # scl_slope, scl_inter
    header[344:348] = b"n+1\x00"

    payload = np.asfortranarray(volume).astype(volume.dtype.newbyteorder("<")).tobytes(order="F")
    opener = gzip.open if path.name.endswith(".gz") else open
    with opener(path, "wb") as f:
        f.write(bytes(header))
        f.write(b"\x00" * (DATA_OFFSET - HEADER_SIZE))
        f.write(payload)
