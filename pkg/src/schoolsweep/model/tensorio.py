"""GTEN binary tensor format.

Layout (little-endian):

    bytes 0..3   magic "GTEN"
    byte  4      version (1)
    byte  5      dtype (0 = float32)
    byte  6      rank
    next         rank x u32 dims
    rest         row-major float32 payload

The write/read roundtrip is bit-exact; any structural problem raises
TensorFormatError carrying the byte offset where parsing failed.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

MAGIC = b"GTEN"
VERSION = 1
DTYPE_F32 = 0


class TensorFormatError(ValueError):
    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (at byte offset {offset})")
        self.offset = offset


def write_tensor(tensor: np.ndarray, path: str | Path) -> None:
    arr = np.asarray(tensor, dtype=np.float32)
    if not arr.flags.c_contiguous:
        arr = np.ascontiguousarray(arr)
    if not np.all(np.isfinite(arr)):
        raise ValueError("tensor contains non-finite values")
    header = MAGIC + struct.pack("<BBB", VERSION, DTYPE_F32, arr.ndim)
    dims = struct.pack(f"<{arr.ndim}I", *arr.shape)
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(dims)
        fh.write(arr.tobytes())


def read_tensor(path: str | Path) -> np.ndarray:
    data = Path(path).read_bytes()
    if len(data) < 4 or data[:4] != MAGIC:
        raise TensorFormatError(f"bad magic {data[:4]!r}, expected {MAGIC!r}", 0)
    if len(data) < 5:
        raise TensorFormatError("truncated before version byte", 4)
    if data[4] != VERSION:
        raise TensorFormatError(f"unsupported version {data[4]}", 4)
    if len(data) < 6:
        raise TensorFormatError("truncated before dtype byte", 5)
    if data[5] != DTYPE_F32:
        raise TensorFormatError(f"unsupported dtype code {data[5]}", 5)
    if len(data) < 7:
        raise TensorFormatError("truncated before rank byte", 6)
    rank = data[6]
    dims_end = 7 + 4 * rank
    if len(data) < dims_end:
        raise TensorFormatError(
            f"expected {4 * rank} dim bytes, found {len(data) - 7}", len(data)
        )
    shape = struct.unpack(f"<{rank}I", data[7:dims_end])
    count = 1
    for d in shape:
        count *= d
    expected = 4 * count
    payload = data[dims_end:]
    if len(payload) != expected:
        raise TensorFormatError(
            f"expected {expected} payload bytes, found {len(payload)}", dims_end
        )
    arr = np.frombuffer(payload, dtype="<f4").reshape(shape).copy()
    if not np.all(np.isfinite(arr)):
        raise TensorFormatError("payload contains non-finite values", dims_end)
    return arr
