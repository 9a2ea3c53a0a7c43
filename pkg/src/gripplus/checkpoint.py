"""Binary parameter checkpoints with a JSON configuration sidecar.

Layout (all integers little-endian)::

    magic      8 bytes   b"GRIPCKPT"
    version    uint32
    manifest   uint32 length + UTF-8 JSON list of {"name", "shape", "dtype"}
    payloads   concatenated "<f8" arrays in manifest order
"""
from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from .errors import DataError

MAGIC = b"GRIPCKPT"
VERSION = 1


def to_bytes(arrays: dict[str, np.ndarray]) -> bytes:
    manifest = [{"name": k, "shape": list(v.shape), "dtype": "<f8"} for k, v in arrays.items()]
    head = json.dumps(manifest, separators=(",", ":")).encode()
    parts = [MAGIC, struct.pack("<II", VERSION, len(head)), head]
    parts += [np.ascontiguousarray(v, dtype="<f8").tobytes() for v in arrays.values()]
    return b"".join(parts)


def from_bytes(blob: bytes) -> dict[str, np.ndarray]:
    if len(blob) < 16 or blob[:8] != MAGIC:
        raise DataError("not a gripplus checkpoint (bad magic)")
    version, hlen = struct.unpack("<II", blob[8:16])
    if version != VERSION:
        raise DataError(f"unsupported checkpoint version {version}")
    try:
        manifest = json.loads(blob[16:16 + hlen])
    except ValueError:
        raise DataError("checkpoint manifest is corrupt") from None
    offset = 16 + hlen
    out = {}
    for entry in manifest:
        shape = tuple(entry["shape"])
        count = int(np.prod(shape, dtype=np.int64))
        if offset + 8 * count > len(blob):
            raise DataError(f"checkpoint truncated inside {entry['name']!r}")
        arr = np.frombuffer(blob, dtype=entry["dtype"], count=count, offset=offset)
        out[entry["name"]] = arr.astype(np.float64).reshape(shape)
        offset += 8 * count
    if offset != len(blob):
        raise DataError("checkpoint payload size does not match its manifest")
    return out


def sidecar_path(path) -> Path:
    path = Path(path)
    return path.with_suffix(path.suffix + ".json")


def save(path, arrays: dict[str, np.ndarray], config: dict | None = None) -> None:
    path = Path(path)
    path.write_bytes(to_bytes(arrays))
    if config is not None:
        sidecar_path(path).write_text(json.dumps(config, indent=2, sort_keys=True) + "\n")


def load(path) -> tuple[dict[str, np.ndarray], dict | None]:
    path = Path(path)
    arrays = from_bytes(path.read_bytes())
    side = sidecar_path(path)
    config = json.loads(side.read_text()) if side.exists() else None
    return arrays, config
