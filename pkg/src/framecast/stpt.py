"""Binary tensor container: magic "STPT", version, dtype, rank, extents, payload.

Layout, all little-endian:
    bytes 0..3   magic 0x53 0x54 0x50 0x54
    byte  4      format version, currently 1
    byte  5      dtype code: 0 = float32, 1 = float64, 2 = uint8
    byte  6      rank (>= 1)
    then rank * uint32 extents, then the row-major payload.
"""

from __future__ import annotations

import struct

import numpy as np

from .errors import FormatError, ShapeError

MAGIC = b"STPT"
VERSION = 1

_DTYPE_CODES = {
    np.dtype(np.float32): 0,
    np.dtype(np.float64): 1,
    np.dtype(np.uint8): 2,
}
_CODE_DTYPES = {0: np.dtype("<f4"), 1: np.dtype("<f8"), 2: np.dtype("u1")}


def write_stpt(path, array):
    """Serialize one tensor. Accepts float32, float64, or uint8 arrays."""
    arr = np.asarray(array)
    native = arr.dtype.newbyteorder("=")
    if native not in _DTYPE_CODES:
        raise ShapeError(f"unsupported dtype {arr.dtype}; use f32, f64, or u8")
    if arr.ndim < 1:
        raise ShapeError("rank must be >= 1")
    if arr.ndim > 255:
        raise ShapeError("rank must fit in one byte")
    if any(e <= 0 or e > 0xFFFFFFFF for e in arr.shape):
        raise ShapeError(f"extents must be positive uint32 values, got {arr.shape}")
    code = _DTYPE_CODES[native]
    payload = np.ascontiguousarray(arr).astype(_CODE_DTYPES[code], copy=False)
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<BB", VERSION, code))
        fh.write(struct.pack("<B", arr.ndim))
        fh.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
        fh.write(payload.tobytes())


def read_stpt(path):
    """Parse one tensor; raises FormatError on any malformed header or payload."""
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < 7:
        raise FormatError(f"{path}: truncated header ({len(raw)} bytes)")
    if raw[:4] != MAGIC:
        raise FormatError(f"{path}: bad magic {raw[:4]!r}")
    version, code, rank = raw[4], raw[5], raw[6]
    if version != VERSION:
        raise FormatError(f"{path}: unsupported version {version}")
    if code not in _CODE_DTYPES:
        raise FormatError(f"{path}: unknown dtype code {code}")
    if rank < 1:
        raise FormatError(f"{path}: rank must be >= 1")
    head = 7 + 4 * rank
    if len(raw) < head:
        raise FormatError(f"{path}: truncated extent list")
    shape = struct.unpack(f"<{rank}I", raw[7:head])
    if any(e == 0 for e in shape):
        raise FormatError(f"{path}: zero extent in {shape}")
    dtype = _CODE_DTYPES[code]
    count = 1
    for e in shape:
        count *= e
    expected = head + count * dtype.itemsize
    if len(raw) != expected:
        raise FormatError(
            f"{path}: payload is {len(raw) - head} bytes, header promises {expected - head}")
    data = np.frombuffer(raw, dtype=dtype, count=count, offset=head)
    return data.reshape(shape).astype(dtype.newbyteorder("="), copy=True)
