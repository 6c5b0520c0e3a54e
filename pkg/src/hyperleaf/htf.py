"""Reader and writer for the HTF1 tensor file format.

Layout (all little-endian)::

    0   4  magic b"HTF1"
    4   4  u32 ndims, always 3
    8  12  u32 dims C, H, W
    20  4  u32 dtype code, 1 = float32
    24  .  C*H*W float32 values, channel-major
"""
import os
import struct

import numpy as np

from .errors import FormatError
from .tensor import as_cube

MAGIC = b"HTF1"
HEADER_SIZE = 24
DTYPE_FLOAT32 = 1
# Largest element count we accept before declaring the header corrupt.
MAX_ELEMENTS = 1 << 36


def to_bytes(t) -> bytes:
    data = as_cube(t)
    values = data.astype("<f4")
    if not np.all(np.isfinite(values)):
        raise ValueError("tensor contains non-finite values (after float32 conversion)")
    header = MAGIC + struct.pack("<IIIII", 3, *data.shape, DTYPE_FLOAT32)
    return header + values.tobytes(order="C")


def from_bytes(buf: bytes) -> np.ndarray:
    if len(buf) < 4:
        raise FormatError("truncated file: missing magic", len(buf))
    if buf[:4] != MAGIC:
        raise FormatError(f"bad magic {buf[:4]!r}", 0)
    if len(buf) < HEADER_SIZE:
        raise FormatError("truncated header", len(buf))
    ndims, c, h, w, dtype = struct.unpack_from("<IIIII", buf, 4)
    if ndims != 3:
        raise FormatError(f"unsupported ndims {ndims}", 4)
    for k, d in enumerate((c, h, w)):
        if d == 0:
            raise FormatError("zero dimension", 8 + 4 * k)
    count = c * h * w
    if count > MAX_ELEMENTS:
        raise FormatError(f"dimension overflow ({c}x{h}x{w})", 8)
    if dtype != DTYPE_FLOAT32:
        raise FormatError(f"unsupported dtype code {dtype}", 20)
    end = HEADER_SIZE + 4 * count
    if len(buf) < end:
        raise FormatError(f"truncated payload: expected {end} bytes, got {len(buf)}", len(buf))
    if len(buf) > end:
        raise FormatError("trailing bytes after payload", end)
    values = np.frombuffer(buf, dtype="<f4", count=count, offset=HEADER_SIZE)
    return values.astype(np.float64).reshape(c, h, w)


def save_tensor(t, path) -> None:
    """Write ``t`` to ``path`` as HTF1 (values rounded to float32)."""
    payload = to_bytes(t)
    with open(os.fspath(path), "wb") as f:
        f.write(payload)


def load_tensor(path) -> np.ndarray:
    """Read an HTF1 file into a float64 ``(C, H, W)`` array."""
    with open(os.fspath(path), "rb") as f:
        return from_bytes(f.read())
