"""Named-tensor archive: the on-disk format for checkpoints and weight import.

Layout: magic bytes b"NTAR1", a little-endian uint64 header length, a UTF-8
JSON header listing [{name, dtype, shape, offset}] (offsets are relative to
the start of the payload region), then the raw little-endian tensor payloads
in header order. Writing is deterministic for a given dict iteration order.
"""

from __future__ import annotations

import json
import struct
from typing import Dict

import numpy as np

from .errors import ArchiveError

MAGIC = b"NTAR1"

_DTYPES = {"float32": "<f4", "float64": "<f8"}


def save_archive(path, tensors: Dict[str, np.ndarray]) -> None:
    """Write named real tensors to `path` in NTAR1 format."""
    entries = []
    offset = 0
    payloads = []
    for name, arr in tensors.items():
        arr = np.asarray(arr)
        dtype = str(arr.dtype)
        if dtype not in _DTYPES:
            raise ArchiveError(f"unsupported dtype {dtype} for tensor {name!r}")
        raw = np.ascontiguousarray(arr).astype(_DTYPES[dtype]).tobytes()
        entries.append({"name": name, "dtype": dtype,
                        "shape": list(arr.shape), "offset": offset})
        payloads.append(raw)
        offset += len(raw)
    header = json.dumps(entries, sort_keys=True).encode("utf-8")
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<Q", len(header)))
        f.write(header)
        for raw in payloads:
            f.write(raw)


def load_archive(path) -> Dict[str, np.ndarray]:
    """Read an NTAR1 archive back into {name: array}."""
    with open(path, "rb") as f:
        magic = f.read(len(MAGIC))
        if magic != MAGIC:
            raise ArchiveError(f"{path}: bad magic {magic!r}, expected {MAGIC!r}")
        (hlen,) = struct.unpack("<Q", f.read(8))
        entries = json.loads(f.read(hlen).decode("utf-8"))
        payload = f.read()
    out: Dict[str, np.ndarray] = {}
    for e in entries:
        dt = np.dtype(_DTYPES[e["dtype"]])
        shape = tuple(e["shape"])
        n = int(np.prod(shape)) if shape else 1
        start = e["offset"]
        raw = payload[start:start + n * dt.itemsize]
        if len(raw) != n * dt.itemsize:
            raise ArchiveError(f"{path}: truncated payload for {e['name']!r}")
        out[e["name"]] = np.frombuffer(raw, dtype=dt).reshape(shape).astype(e["dtype"])
    return out
