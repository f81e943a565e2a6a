"""Binary checkpoint container.

Layout (all integers little-endian uint32)::

    magic      8 bytes  b"LSCKPT\\x00\\x01"
    version    uint32
    model id   uint32 length + UTF-8 bytes
    metadata   uint32 length + UTF-8 JSON object
    count      uint32
    records    count x (name length, name, ndim, dims..., float32 LE data)
"""

from __future__ import annotations

import json
import os
import struct
import tempfile
from pathlib import Path

import numpy as np

MAGIC = b"LSCKPT\x00\x01"
FORMAT_VERSION = 1


class CheckpointError(ValueError):
    pass


def _pack_str(value: str) -> bytes:
    raw = value.encode("utf-8")
    return struct.pack("<I", len(raw)) + raw


def atomic_write_bytes(path, payload: bytes) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(payload)
        umask = os.umask(0)
        os.umask(umask)
        os.chmod(tmp, 0o666 & ~umask)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def dump_checkpoint(model_id: str, arrays: dict[str, np.ndarray], metadata: dict | None = None) -> bytes:
    chunks = [MAGIC, struct.pack("<I", FORMAT_VERSION), _pack_str(model_id)]
    chunks.append(_pack_str(json.dumps(metadata or {}, sort_keys=True)))
    chunks.append(struct.pack("<I", len(arrays)))
    for name, value in arrays.items():
        arr = np.ascontiguousarray(value, dtype="<f4")
        chunks.append(_pack_str(name))
        chunks.append(struct.pack("<I", arr.ndim))
        chunks.append(struct.pack(f"<{arr.ndim}I", *arr.shape))
        chunks.append(arr.tobytes())
    return b"".join(chunks)


def save_checkpoint(path, model_id: str, arrays: dict[str, np.ndarray], metadata: dict | None = None) -> None:
    atomic_write_bytes(path, dump_checkpoint(model_id, arrays, metadata))


def parse_checkpoint(payload: bytes) -> tuple[str, dict[str, np.ndarray], dict]:
    if payload[: len(MAGIC)] != MAGIC:
        raise CheckpointError("not a checkpoint file (bad magic)")
    offset = len(MAGIC)

    def take(n):
        nonlocal offset
        if offset + n > len(payload):
            raise CheckpointError("truncated checkpoint")
        chunk = payload[offset : offset + n]
        offset += n
        return chunk

    def take_dims(count):
        return struct.unpack(f"<{count}I", take(4 * count))

    def take_u32():
        return take_dims(1)[0]

    def take_str():
        return take(take_u32()).decode("utf-8")

    version = take_u32()
    if version != FORMAT_VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version}")
    model_id = take_str()
    metadata = json.loads(take_str())
    arrays = {}
    for _ in range(take_u32()):
        name = take_str()
        ndim = take_u32()
        shape = take_dims(ndim)
        count = int(np.prod(shape)) if shape else 1
        arrays[name] = np.frombuffer(take(4 * count), dtype="<f4").reshape(shape).astype(np.float32)
    return model_id, arrays, metadata


def load_checkpoint(path) -> tuple[str, dict[str, np.ndarray], dict]:
    return parse_checkpoint(Path(path).read_bytes())
