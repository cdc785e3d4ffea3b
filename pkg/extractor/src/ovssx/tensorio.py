"""Writer/reader for the flat binary tensor container consumed by the engine.

Layout: magic ``OVST``, version u32 LE (=1), dtype code u8, rank u8,
reserved u16 (=0), then rank u64 LE extents and the row-major little-endian
payload. This is a cross-tool file contract, so the implementation is kept
self-contained rather than imported from the engine.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

MAGIC = b"OVST"
VERSION = 1
_HEADER = struct.Struct("<4sIBBH")

_DTYPE_CODES = {
    np.dtype("float32"): 0,
    np.dtype("float64"): 1,
    np.dtype("uint8"): 2,
    np.dtype("uint16"): 3,
    np.dtype("int64"): 4,
}
_CODE_DTYPES = {code: dtype for dtype, code in _DTYPE_CODES.items()}


class TensorFormatError(ValueError):
    pass


def write_tensor(path, array: np.ndarray) -> None:
    array = np.ascontiguousarray(array)
    if array.dtype not in _DTYPE_CODES:
        raise TensorFormatError(f"unsupported dtype {array.dtype}")
    if array.ndim < 1 or any(d < 1 for d in array.shape):
        raise TensorFormatError(f"tensor must have rank >= 1 and positive dims, got {array.shape}")
    little = array.astype(array.dtype.newbyteorder("<"), copy=False)
    with open(path, "wb") as f:
        f.write(_HEADER.pack(MAGIC, VERSION, _DTYPE_CODES[array.dtype], array.ndim, 0))
        f.write(struct.pack(f"<{array.ndim}Q", *array.shape))
        f.write(little.tobytes())


def read_tensor(path) -> np.ndarray:
    data = Path(path).read_bytes()
    if len(data) < _HEADER.size:
        raise TensorFormatError("file too short for header")
    magic, version, code, rank, reserved = _HEADER.unpack_from(data)
    if magic != MAGIC:
        raise TensorFormatError(f"bad magic {magic!r}")
    if version != VERSION:
        raise TensorFormatError(f"unsupported version {version}")
    if code not in _CODE_DTYPES:
        raise TensorFormatError(f"unknown dtype code {code}")
    dims_end = _HEADER.size + 8 * rank
    if rank < 1 or len(data) < dims_end:
        raise TensorFormatError("truncated dimension list")
    shape = struct.unpack_from(f"<{rank}Q", data, _HEADER.size)
    dtype = _CODE_DTYPES[code]
    expected = dims_end + int(np.prod(shape)) * dtype.itemsize
    if len(data) != expected:
        raise TensorFormatError(f"payload size mismatch: {len(data)} != {expected}")
    arr = np.frombuffer(data[dims_end:], dtype=dtype.newbyteorder("<"))
    return arr.reshape(shape).astype(dtype, copy=False)
