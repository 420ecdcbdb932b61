"""Versioned binary container for named float32 arrays plus a JSON header.

Layout: magic, uint32 version, uint64 header length, UTF-8 JSON header,
raw little-endian float32 payload, then the sha256 of everything before it.
"""

from __future__ import annotations

import hashlib
import json
import os
import struct
from pathlib import Path

import numpy as np

MAGIC = b"FQACKPT\x00"
VERSION = 1
_PREFIX = struct.Struct("<8sIQ")
_DIGEST = 32


class CheckpointError(ValueError):
    pass


def atomic_write_bytes(path, data: bytes):
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "wb") as fh:
        fh.write(data)
        fh.flush()
        os.fsync(fh.fileno())
    os.replace(tmp, path)


def encode_checkpoint(arrays: dict, meta: dict) -> bytes:
    entries, chunks, offset = [], [], 0
    for name in sorted(arrays):
        a = np.ascontiguousarray(arrays[name], dtype="<f4")
        entries.append({"name": name, "shape": list(a.shape), "offset": offset})
        chunks.append(a.tobytes())
        offset += a.nbytes
    header = json.dumps({"tensors": entries, "meta": meta}, sort_keys=True).encode("utf-8")
    body = _PREFIX.pack(MAGIC, VERSION, len(header)) + header + b"".join(chunks)
    return body + hashlib.sha256(body).digest()


def decode_checkpoint(blob: bytes) -> tuple[dict, dict]:
    if len(blob) < _PREFIX.size + _DIGEST:
        raise CheckpointError("checkpoint truncated")
    magic, version, hlen = _PREFIX.unpack_from(blob)
    if magic != MAGIC:
        raise CheckpointError("not a checkpoint file")
    if version != VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version}")
    body, digest = blob[:-_DIGEST], blob[-_DIGEST:]
    if hashlib.sha256(body).digest() != digest:
        raise CheckpointError("checkpoint hash mismatch (corrupt or truncated)")
    start = _PREFIX.size
    header = json.loads(body[start:start + hlen].decode("utf-8"))
    payload = memoryview(body)[start + hlen:]
    arrays = {}
    for ent in header["tensors"]:
        count = int(np.prod(ent["shape"], dtype=np.int64))
        a = np.frombuffer(payload, dtype="<f4", count=count, offset=ent["offset"])
        arrays[ent["name"]] = a.reshape(ent["shape"]).astype(np.float32)
    return arrays, header["meta"]


def save_checkpoint(path, arrays: dict, meta: dict):
    atomic_write_bytes(path, encode_checkpoint(arrays, meta))


def load_checkpoint(path) -> tuple[dict, dict]:
    try:
        blob = Path(path).read_bytes()
    except OSError as exc:
        raise CheckpointError(f"cannot read checkpoint {path}: {exc}") from None
    return decode_checkpoint(blob)
