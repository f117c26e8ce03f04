"""Versioned binary blobs for model weights.

Layout: 4-byte magic, u8 format version, u32 header length, UTF-8 JSON
header (metadata plus tensor names, dtypes and shapes, keys sorted), then the
raw little-endian tensor bytes in header order.  The encoding is fully
deterministic, so save -> load -> save reproduces the same bytes.
"""
from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np
import torch

from .errors import FormatError

BLOB_VERSION = 1


def dumps(magic, meta, state):
    if len(magic) != 4:
        raise ValueError("magic must be 4 bytes")
    names = sorted(state)
    arrays = [state[n].detach().cpu().contiguous().numpy() for n in names]
    header = {
        "meta": meta,
        "tensors": [[n, a.dtype.str, list(a.shape)] for n, a in zip(names, arrays)],
    }
    head = json.dumps(header, sort_keys=True, separators=(",", ":")).encode()
    parts = [magic, struct.pack(">BI", BLOB_VERSION, len(head)), head]
    parts.extend(a.astype(a.dtype.newbyteorder("<"), copy=False).tobytes() for a in arrays)
    return b"".join(parts)


def loads(blob, magic):
    if blob[:4] != magic:
        raise FormatError(f"bad magic {blob[:4]!r}, expected {magic!r}")
    if len(blob) < 9:
        raise FormatError("truncated checkpoint header")
    version, head_len = struct.unpack(">BI", blob[4:9])
    if version != BLOB_VERSION:
        raise FormatError(f"unsupported checkpoint version {version}")
    try:
        header = json.loads(blob[9:9 + head_len].decode())
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise FormatError(f"corrupt checkpoint header: {exc}") from None
    offset = 9 + head_len
    state = {}
    for name, dtype, shape in header["tensors"]:
        dt = np.dtype(dtype)
        count = int(np.prod(shape)) if shape else 1
        nbytes = count * dt.itemsize
        if offset + nbytes > len(blob):
            raise FormatError(f"checkpoint truncated in tensor {name!r}")
        arr = np.frombuffer(blob, dtype=dt, count=count, offset=offset).reshape(shape)
        state[name] = torch.from_numpy(arr.copy())
        offset += nbytes
    if offset != len(blob):
        raise FormatError("trailing bytes after checkpoint tensors")
    return header["meta"], state


def save(path, magic, meta, state):
    Path(path).write_bytes(dumps(magic, meta, state))


def load(path, magic):
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"checkpoint not found: {path}")
    return loads(path.read_bytes(), magic)
