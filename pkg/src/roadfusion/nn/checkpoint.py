"""Binary checkpoint container.

Layout (little-endian)::

    b"SRSD" | u16 version | u32 header_len | header (UTF-8 JSON) | float32 blocks

The header's ``"tensors"`` list gives ``name`` and ``shape`` for each raw
block, in file order. Any other header keys are opaque to this module.
"""

from __future__ import annotations

import json
import struct

import numpy as np

from ..core import decode_error, io_error

MAGIC = b"SRSD"
VERSION = 1


def encode(header: dict, tensors: list[tuple[str, np.ndarray]]) -> bytes:
    header = dict(header)
    header["tensors"] = [{"name": n, "shape": list(a.shape)} for n, a in tensors]
    blob = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    parts = [MAGIC, struct.pack("<HI", VERSION, len(blob)), blob]
    parts += [np.ascontiguousarray(a, dtype="<f4").tobytes() for _, a in tensors]
    return b"".join(parts)


def decode(data: bytes) -> tuple[dict, list[tuple[str, np.ndarray]]]:
    if len(data) < 10 or data[:4] != MAGIC:
        raise decode_error("not an SRSD checkpoint")
    version, hlen = struct.unpack("<HI", data[4:10])
    if version != VERSION:
        raise decode_error(f"unsupported checkpoint version {version}")
    try:
        header = json.loads(data[10:10 + hlen].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise decode_error(f"corrupt checkpoint header: {exc}") from None
    offset = 10 + hlen
    tensors = []
    for entry in header.get("tensors", []):
        shape = tuple(entry["shape"])
        nbytes = 4 * int(np.prod(shape, dtype=np.int64))
        if offset + nbytes > len(data):
            raise decode_error(f"checkpoint truncated in tensor {entry['name']!r}")
        arr = np.frombuffer(data, dtype="<f4", count=nbytes // 4, offset=offset).reshape(shape)
        tensors.append((entry["name"], arr.astype(np.float32)))
        offset += nbytes
    if offset != len(data):
        raise decode_error(f"{len(data) - offset} trailing bytes after last tensor")
    return header, tensors


def write(path, data: bytes) -> None:
    try:
        with open(path, "wb") as f:
            f.write(data)
    except OSError as exc:
        raise io_error(str(exc), str(path)) from None


def read(path) -> bytes:
    try:
        with open(path, "rb") as f:
            return f.read()
    except OSError as exc:
        raise io_error(str(exc), str(path)) from None
