"""Binary tensor container (.dten files).

Layout: 4-byte magic ``DTEN``, version byte, dtype byte (0=f32, 1=f64),
ndim byte (at most 8), one reserved zero byte, then ``ndim`` little-endian
u64 extents followed by the row-major little-endian payload.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

MAGIC = b"DTEN"
VERSION = 1
MAX_NDIM = 8

_DTYPE_CODES = {np.dtype("<f4"): 0, np.dtype("<f8"): 1}
_CODE_DTYPES = {0: np.dtype("<f4"), 1: np.dtype("<f8")}


class TensorFormatError(ValueError):
    """Raised when a .dten file violates the container format."""


def store_tensor(tensor, path):
    """Write a float32/float64 array to ``path`` in DTEN format.

    The array dtype is preserved, so ``load_tensor(store_tensor(t))`` is
    bit-identical to ``t``. Callers that want the compact on-disk default
    should cast to float32 before storing.
    """
    arr = np.ascontiguousarray(tensor)
    if arr.dtype not in _DTYPE_CODES:
        if arr.dtype.kind not in "fiu":
            raise TensorFormatError(f"unsupported dtype {arr.dtype}")
        arr = arr.astype("<f8")
    if arr.ndim > MAX_NDIM:
        raise TensorFormatError(f"ndim {arr.ndim} exceeds {MAX_NDIM}")
    code = _DTYPE_CODES[np.dtype(arr.dtype.newbyteorder("<"))]
    header = MAGIC + struct.pack("<BBBB", VERSION, code, arr.ndim, 0)
    header += struct.pack(f"<{arr.ndim}Q", *arr.shape)
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(arr.astype(arr.dtype.newbyteorder("<"), copy=False).tobytes())


def load_tensor(path):
    """Read a .dten file back into a numpy array."""
    blob = Path(path).read_bytes()
    if len(blob) < 8:
        raise TensorFormatError(f"{path}: truncated header")
    if blob[:4] != MAGIC:
        raise TensorFormatError(f"{path}: bad magic {blob[:4]!r}")
    version, code, ndim, reserved = struct.unpack("<BBBB", blob[4:8])
    if version != VERSION:
        raise TensorFormatError(f"{path}: unsupported version {version}")
    if code not in _CODE_DTYPES:
        raise TensorFormatError(f"{path}: unknown dtype code {code}")
    if ndim > MAX_NDIM:
        raise TensorFormatError(f"{path}: ndim {ndim} exceeds {MAX_NDIM}")
    if reserved != 0:
        raise TensorFormatError(f"{path}: reserved byte must be zero")
    offset = 8 + 8 * ndim
    if len(blob) < offset:
        raise TensorFormatError(f"{path}: truncated extents")
    shape = struct.unpack(f"<{ndim}Q", blob[8:offset])
    dtype = _CODE_DTYPES[code]
    count = int(np.prod(shape, dtype=np.int64)) if ndim else 1
    expected = offset + count * dtype.itemsize
    if len(blob) < expected:
        raise TensorFormatError(
            f"{path}: payload has {len(blob) - offset} bytes, expected {count * dtype.itemsize}"
        )
    data = np.frombuffer(blob, dtype=dtype, count=count, offset=offset)
    return data.reshape(shape).copy()
