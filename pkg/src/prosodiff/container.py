"""Versioned binary container for named float64 arrays.

Layout (little-endian throughout):
    magic   4 bytes  b"PRSD"
    version u32      currently 1
    count   u32
    entries, each:
        name_len u16, name utf-8 bytes
        ndim u32, dims u32 * ndim
        payload float64 * prod(dims)

Used for checkpoints, extracted features, and predicted contours.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

MAGIC = b"PRSD"
VERSION = 1


class ContainerError(ValueError):
    """Malformed or incompatible container file."""


def save_arrays(path, arrays: dict) -> None:
    path = Path(path)
    parts = [MAGIC, struct.pack("<II", VERSION, len(arrays))]
    for name, arr in arrays.items():
        arr = np.asarray(arr, dtype=np.float64)
        encoded = name.encode("utf-8")
        parts.append(struct.pack("<H", len(encoded)))
        parts.append(encoded)
        parts.append(struct.pack("<I", arr.ndim))
        parts.append(struct.pack(f"<{arr.ndim}I", *arr.shape))
        parts.append(np.ascontiguousarray(arr).astype("<f8").tobytes())
    path.write_bytes(b"".join(parts))


def load_arrays(path) -> dict:
    buf = Path(path).read_bytes()
    if buf[:4] != MAGIC:
        raise ContainerError(f"{path}: bad magic {buf[:4]!r}, expected {MAGIC!r}")
    version, count = struct.unpack_from("<II", buf, 4)
    if version != VERSION:
        raise ContainerError(f"{path}: unsupported container version {version}")
    offset = 12
    arrays = {}
    for _ in range(count):
        (name_len,) = struct.unpack_from("<H", buf, offset)
        offset += 2
        name = buf[offset:offset + name_len].decode("utf-8")
        offset += name_len
        (ndim,) = struct.unpack_from("<I", buf, offset)
        offset += 4
        dims = struct.unpack_from(f"<{ndim}I", buf, offset)
        offset += 4 * ndim
        n = int(np.prod(dims)) if ndim else 1
        arr = np.frombuffer(buf, dtype="<f8", count=n, offset=offset)
        offset += 8 * n
        arrays[name] = arr.reshape(dims).astype(np.float64)
    if offset != len(buf):
        raise ContainerError(f"{path}: {len(buf) - offset} trailing bytes")
    return arrays
