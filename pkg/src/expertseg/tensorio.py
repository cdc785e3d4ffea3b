"""Flat binary tensor container.

One tensor per file. Layout (all little-endian):

    magic   4 bytes  b"OVST"
    version u32      (=1)
    dtype   u8       0=f32, 1=f64, 2=u8, 3=u16, 4=i64
    rank    u8
    reserved u16     (=0)
    dims    rank x u64
    payload row-major

Two writes of the same tensor are byte-identical; reads validate the
header and payload length eagerly.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .errors import TensorFormatError

MAGIC = b"OVST"
VERSION = 1

# dtype code <-> numpy little-endian dtype
_CODE_TO_DTYPE = {
    0: np.dtype("<f4"),
    1: np.dtype("<f8"),
    2: np.dtype("<u1"),
    3: np.dtype("<u2"),
    4: np.dtype("<i8"),
}
_DTYPE_TO_CODE = {dt: code for code, dt in _CODE_TO_DTYPE.items()}

_HEADER = struct.Struct("<4sIBBH")


def supported_dtypes():
    return tuple(_CODE_TO_DTYPE.values())


def write_tensor(path, array: np.ndarray) -> None:
    """Serialize ``array`` to ``path`` in the container format."""
    arr = np.ascontiguousarray(array)
    key = arr.dtype.newbyteorder("<")
    if key not in _DTYPE_TO_CODE:
        raise TensorFormatError(f"unsupported dtype {arr.dtype}")
    if arr.ndim < 1:
        arr = arr.reshape(1)
    if any(d < 1 for d in arr.shape):
        raise TensorFormatError(f"every dim must be >= 1, got shape {arr.shape}")
    arr = arr.astype(key, copy=False)
    with open(path, "wb") as f:
        f.write(_HEADER.pack(MAGIC, VERSION, _DTYPE_TO_CODE[key], arr.ndim, 0))
        f.write(struct.pack(f"<{arr.ndim}Q", *arr.shape))
        f.write(arr.tobytes(order="C"))


def read_tensor(path) -> np.ndarray:
    """Read a tensor written by :func:`write_tensor`.

    Returns a C-contiguous array in native byte order.
    """
    path = Path(path)
    data = path.read_bytes()
    if len(data) < _HEADER.size:
        raise TensorFormatError(f"{path}: truncated header")
    magic, version, code, rank, reserved = _HEADER.unpack_from(data)
    if magic != MAGIC:
        raise TensorFormatError(f"{path}: bad magic {magic!r}")
    if version != VERSION:
        raise TensorFormatError(f"{path}: unsupported version {version}")
    if code not in _CODE_TO_DTYPE:
        raise TensorFormatError(f"{path}: unknown dtype code {code}")
    if rank < 1:
        raise TensorFormatError(f"{path}: rank must be >= 1")
    if reserved != 0:
        raise TensorFormatError(f"{path}: reserved field must be 0")
    dims_end = _HEADER.size + 8 * rank
    if len(data) < dims_end:
        raise TensorFormatError(f"{path}: truncated dims")
    dims = struct.unpack_from(f"<{rank}Q", data, _HEADER.size)
    if any(d < 1 for d in dims):
        raise TensorFormatError(f"{path}: zero-sized dim in {dims}")
    dtype = _CODE_TO_DTYPE[code]
    count = int(np.prod(dims, dtype=np.uint64))
    expected = dims_end + count * dtype.itemsize
    if len(data) != expected:
        raise TensorFormatError(
            f"{path}: size mismatch, expected {expected} bytes, got {len(data)}"
        )
    arr = np.frombuffer(data, dtype=dtype, count=count, offset=dims_end)
    return arr.reshape(dims).astype(dtype.newbyteorder("="), copy=True)
