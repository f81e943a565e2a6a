"""Phrase container files.

A container is one UTF-8 JSON header line followed by a binary payload::

    {"format": "leadsheet-roll", "version": 1, "kind": "phrase", "shape": [...],
     "tracks": [...], "encoding": "packbits" | "float32-le"}\\n
    <payload>

Binary rolls are stored with ``numpy.packbits`` (C order); real-valued
features as little-endian float32. Round trips are bit-exact.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .pianoroll import DataError, Phrase
from .tensor.checkpoint import atomic_write_bytes

FORMAT = "leadsheet-roll"
VERSION = 1


def dump_rolls(array, tracks=None, kind: str = "phrase", extra: dict | None = None) -> bytes:
    array = np.asarray(array)
    binary = array.dtype == bool or np.isin(array, (0, 1)).all()
    header = {
        "format": FORMAT,
        "version": VERSION,
        "kind": kind,
        "shape": list(array.shape),
        "tracks": list(tracks) if tracks is not None else None,
        "encoding": "packbits" if binary and kind == "phrase" else "float32-le",
    }
    if extra:
        header.update(extra)
    if header["encoding"] == "packbits":
        payload = np.packbits(array.astype(bool).reshape(-1)).tobytes()
    else:
        payload = np.ascontiguousarray(array, dtype="<f4").tobytes()
    return json.dumps(header, sort_keys=True).encode("utf-8") + b"\n" + payload


def parse_rolls(blob: bytes) -> tuple[np.ndarray, dict]:
    newline = blob.find(b"\n")
    if newline < 0:
        raise DataError("not a roll container: missing header")
    try:
        header = json.loads(blob[:newline].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise DataError(f"not a roll container: {exc}") from exc
    if header.get("format") != FORMAT or header.get("version") != VERSION:
        raise DataError("unsupported roll container format or version")
    shape = tuple(header["shape"])
    count = int(np.prod(shape))
    payload = blob[newline + 1 :]
    if header["encoding"] == "packbits":
        if len(payload) != -(-count // 8):
            raise DataError("truncated roll payload")
        bits = np.unpackbits(np.frombuffer(payload, dtype=np.uint8), count=count)
        array = bits.astype(bool).reshape(shape)
    elif header["encoding"] == "float32-le":
        if len(payload) != 4 * count:
            raise DataError("truncated roll payload")
        array = np.frombuffer(payload, dtype="<f4").reshape(shape).astype(np.float32)
    else:
        raise DataError(f"unknown encoding {header['encoding']!r}")
    return array, header


def save_rolls(path, array, tracks=None, kind: str = "phrase", extra: dict | None = None) -> None:
    atomic_write_bytes(path, dump_rolls(array, tracks, kind, extra))


def load_rolls(path) -> tuple[np.ndarray, dict]:
    try:
        blob = Path(path).read_bytes()
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc}") from exc
    return parse_rolls(blob)


def save_phrases(path, phrases: list[Phrase]) -> None:
    if not phrases:
        raise DataError("no phrases to save")
    tracks = phrases[0].tracks
    if any(p.tracks != tracks or p.bars.shape != phrases[0].bars.shape for p in phrases):
        raise DataError("phrases in one container must share shape and tracks")
    save_rolls(path, np.stack([p.bars for p in phrases]), tracks)


def load_phrases(path) -> list[Phrase]:
    array, header = load_rolls(path)
    if header["kind"] != "phrase":
        raise DataError(f"{path} holds {header['kind']!r} data, not phrases")
    tracks = header.get("tracks")
    if array.ndim == 4:
        array = array[None]
    return [Phrase(a, tracks) for a in array]
