"""Versioned binary checkpoint container for named parameter tensors.

Byte layout (all integers little-endian unsigned 32-bit, payloads
little-endian float64, C order):

    bytes 0-3   magic b"FFCP"
    u32         format version (currently 1)
    u32         metadata length in bytes
    bytes       metadata: UTF-8 JSON with sorted keys (training config,
                input config, architecture description)
    u32         tensor count
    per tensor, in ascending name order:
        u32     name length, then UTF-8 name
        u32     ndim, then u32 * ndim dimensions
        bytes   8 * prod(dims) payload, little-endian float64, C order

Writing is byte-deterministic for equal inputs: names are sorted and the
JSON serialization is canonical.
"""

from __future__ import annotations

import json
import os
import struct

import numpy as np

__all__ = ["save_checkpoint", "load_checkpoint", "CheckpointError"]

_MAGIC = b"FFCP"
_VERSION = 1


class CheckpointError(ValueError):
    """A checkpoint failed to parse."""


def save_checkpoint(path: str | os.PathLike, tensors: dict[str, np.ndarray], metadata: dict) -> None:
    """Write named float64 tensors plus a JSON metadata block."""
    blob = json.dumps(metadata, sort_keys=True, separators=(",", ":")).encode("utf-8")
    with open(path, "wb") as f:
        f.write(_MAGIC)
        f.write(struct.pack("<II", _VERSION, len(blob)))
        f.write(blob)
        f.write(struct.pack("<I", len(tensors)))
        for name in sorted(tensors):
            arr = np.ascontiguousarray(tensors[name], dtype="<f8")
            encoded = name.encode("utf-8")
            f.write(struct.pack("<I", len(encoded)))
            f.write(encoded)
            f.write(struct.pack("<I", arr.ndim))
            f.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
            f.write(arr.tobytes())


def load_checkpoint(path: str | os.PathLike) -> tuple[dict[str, np.ndarray], dict]:
    """Read a checkpoint back as (tensors, metadata)."""
    with open(path, "rb") as f:
        if f.read(4) != _MAGIC:
            raise CheckpointError(f"{path}: not a checkpoint (bad magic)")
        version, meta_len = struct.unpack("<II", f.read(8))
        if version != _VERSION:
            raise CheckpointError(f"{path}: unsupported version {version}")
        metadata = json.loads(f.read(meta_len).decode("utf-8"))
        (count,) = struct.unpack("<I", f.read(4))
        tensors: dict[str, np.ndarray] = {}
        for _ in range(count):
            (name_len,) = struct.unpack("<I", f.read(4))
            name = f.read(name_len).decode("utf-8")
            (ndim,) = struct.unpack("<I", f.read(4))
            shape = struct.unpack(f"<{ndim}I", f.read(4 * ndim))
            size = int(np.prod(shape)) if shape else 1
            payload = f.read(8 * size)
            if len(payload) != 8 * size:
                raise CheckpointError(f"{path}: truncated tensor {name!r}")
            tensors[name] = np.frombuffer(payload, dtype="<f8").reshape(shape).copy()
    return tensors, metadata
