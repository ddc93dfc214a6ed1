"""Minimal binary tensor container used by the pipeline.

Layout (all multi-byte fields little-endian):

    offset 0   4 bytes   magic b"FCT1"
    offset 4   1 byte    dtype code: 0 = f32, 1 = u8, 2 = i32
    offset 5   1 byte    rank, 2 or 3
    offset 6   rank * 8  dims, uint64 each
    then               payload, row-major, dims product * dtype size bytes

Round-trips are bit-exact for every supported dtype.  Malformed files
raise dedicated exception types carrying a stable string code so the CLI
can map them to exit statuses.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

MAGIC = b"FCT1"
MAX_ELEMENTS = 1 << 48  # caps dims products well below addressable memory

_DTYPES = {0: np.dtype("<f4"), 1: np.dtype("<u1"), 2: np.dtype("<i4")}
_CODES = {np.dtype("float32"): 0, np.dtype("uint8"): 1, np.dtype("int32"): 2}


class TensorFileError(Exception):
    """Base for malformed tensor files; `code` is a stable identifier."""

    code = "tensor-file"


class BadMagicError(TensorFileError):
    code = "bad-magic"


class BadHeaderError(TensorFileError):
    code = "bad-header"


class DimsOverflowError(TensorFileError):
    code = "dims-overflow"


class TruncatedPayloadError(TensorFileError):
    code = "truncated-payload"


class TrailingBytesError(TensorFileError):
    code = "trailing-bytes"


def write_tensor(tensor: np.ndarray, path: str | Path) -> None:
    """Serialize a rank-2/3 float32, uint8, or int32 array."""
    arr = np.ascontiguousarray(tensor)
    if arr.dtype not in _CODES:
        raise ValueError(
            f"unsupported dtype {arr.dtype}; cast to float32, uint8, or int32 first"
        )
    if arr.ndim not in (2, 3):
        raise ValueError(f"only rank 2 or 3 tensors are supported, got rank {arr.ndim}")
    code = _CODES[arr.dtype]
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<BB", code, arr.ndim))
        fh.write(struct.pack(f"<{arr.ndim}Q", *arr.shape))
        fh.write(arr.astype(_DTYPES[code], copy=False).tobytes(order="C"))


def read_tensor(path: str | Path) -> np.ndarray:
    """Load a tensor written by write_tensor; inverse is bit-exact."""
    with open(path, "rb") as fh:
        blob = fh.read()
    if len(blob) < 4 or blob[:4] != MAGIC:
        raise BadMagicError(f"{path}: bad magic {blob[:4]!r}")
    if len(blob) < 6:
        raise TruncatedPayloadError(f"{path}: header cut short")
    code, rank = struct.unpack_from("<BB", blob, 4)
    if code not in _DTYPES:
        raise BadHeaderError(f"{path}: unknown dtype code {code}")
    if rank not in (2, 3):
        raise BadHeaderError(f"{path}: unsupported rank {rank}")
    dims_end = 6 + 8 * rank
    if len(blob) < dims_end:
        raise TruncatedPayloadError(f"{path}: dims cut short")
    dims = struct.unpack_from(f"<{rank}Q", blob, 6)
    if any(d == 0 for d in dims):
        raise BadHeaderError(f"{path}: zero-sized dimension in {dims}")
    n = 1
    for d in dims:
        n *= d
        if n > MAX_ELEMENTS:
            raise DimsOverflowError(f"{path}: dims {dims} exceed element cap")
    dtype = _DTYPES[code]
    payload = blob[dims_end:]
    expected = n * dtype.itemsize
    if len(payload) < expected:
        raise TruncatedPayloadError(
            f"{path}: payload holds {len(payload)} bytes, header implies {expected}"
        )
    if len(payload) > expected:
        raise TrailingBytesError(
            f"{path}: {len(payload) - expected} bytes of trailing garbage"
        )
    return np.frombuffer(payload, dtype=dtype).reshape(dims).copy()
