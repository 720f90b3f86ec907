"""Versioned binary container for model files.

Layout::

    b"MACPRINT" | u16 version | u64 header length | JSON header | array bytes | sha256

The JSON header carries free-form metadata plus an index of the stored
arrays (name, dtype, shape, offset). Arrays are stored little-endian in
index order; the trailing SHA-256 covers every preceding byte. Writing the
same content twice yields identical files.
"""

from __future__ import annotations

import hashlib
import json
import struct
from pathlib import Path

import numpy as np

MAGIC = b"MACPRINT"
VERSION = 1


class ContainerError(ValueError):
    pass


def dumps(meta: dict, arrays: dict[str, np.ndarray]) -> bytes:
    index = []
    chunks = []
    offset = 0
    for name in sorted(arrays):
        arr = np.ascontiguousarray(arrays[name])
        dtype = arr.dtype.newbyteorder("<")
        raw = arr.astype(dtype, copy=False).tobytes()
        index.append({"name": name, "dtype": dtype.str, "shape": list(arr.shape), "offset": offset})
        chunks.append(raw)
        offset += len(raw)
    header = json.dumps({"meta": meta, "arrays": index}, sort_keys=True).encode()
    body = MAGIC + struct.pack("<HQ", VERSION, len(header)) + header + b"".join(chunks)
    return body + hashlib.sha256(body).digest()


def loads(blob: bytes) -> tuple[dict, dict[str, np.ndarray]]:
    if len(blob) < len(MAGIC) + 10 + 32 or blob[: len(MAGIC)] != MAGIC:
        raise ContainerError("not a macprint model file")
    body, digest = blob[:-32], blob[-32:]
    if hashlib.sha256(body).digest() != digest:
        raise ContainerError("checksum mismatch")
    version, hlen = struct.unpack_from("<HQ", body, len(MAGIC))
    if version != VERSION:
        raise ContainerError(f"unsupported container version {version}")
    start = len(MAGIC) + 10
    header = json.loads(body[start:start + hlen])
    data = body[start + hlen:]
    arrays = {}
    for entry in header["arrays"]:
        dtype = np.dtype(entry["dtype"])
        count = int(np.prod(entry["shape"], dtype=np.int64))
        arr = np.frombuffer(data, dtype=dtype, count=count, offset=entry["offset"])
        arrays[entry["name"]] = arr.reshape(entry["shape"]).astype(dtype.newbyteorder("="))
    return header["meta"], arrays


def save(path, meta: dict, arrays: dict[str, np.ndarray]) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(dumps(meta, arrays))


def load(path) -> tuple[dict, dict[str, np.ndarray]]:
    return loads(Path(path).read_bytes())
