"""Deterministic output writers.  Every file carries the config hash."""

from __future__ import annotations

import csv
import json
import math
import struct
from pathlib import Path

import numpy as np

from .grid import GridMismatchError, SpatialGrid

__all__ = ["to_jsonable", "write_json", "read_json", "write_csv", "read_csv_header",
           "write_frames", "read_frames", "HashMismatchError", "check_hash"]


class HashMismatchError(ValueError):
    pass


def to_jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return to_jsonable(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return v if math.isfinite(v) else repr(v)
    return obj


def write_json(path, payload: dict, *, config_hash: str) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    doc = {"config_hash": config_hash, **to_jsonable(payload)}
    path.write_text(json.dumps(doc, sort_keys=True, indent=2) + "\n")
    return path


def read_json(path) -> dict:
    return json.loads(Path(path).read_text())


def check_hash(path, expected: str) -> dict:
    """Load a JSON report, refusing it if it was produced under another config."""
    doc = read_json(path)
    if doc.get("config_hash") != expected:
        raise HashMismatchError(f"{path}: config hash {doc.get('config_hash')} != {expected}")
    return doc


def write_csv(path, header, rows, *, config_hash: str, seed=None) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        fh.write(f"# config_hash={config_hash}" + (f" seed={seed}" if seed is not None else "") + "\n")
        w = csv.writer(fh)
        w.writerow(header)
        for row in rows:
            w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in row])
    return path


def read_csv_header(path) -> dict:
    with open(path) as fh:
        first = fh.readline().strip()
    out = {}
    for tok in first.lstrip("# ").split():
        k, _, v = tok.partition("=")
        out[k] = v
    return out


# 32-byte header: magic(8) version(u32) grid digest(16 ascii) frame count(u32)
_FRAME_MAGIC = b"SWFRAME\x00"
_FRAME_HEADER = struct.Struct("<8sI16sI")
assert _FRAME_HEADER.size == 32


def write_frames(path, frames: np.ndarray, grid: SpatialGrid) -> Path:
    frames = np.atleast_2d(np.asarray(frames, dtype="<f8"))
    grid.check_vector(frames)
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as fh:
        fh.write(_FRAME_HEADER.pack(_FRAME_MAGIC, 1, grid.digest().encode(), frames.shape[0]))
        fh.write(np.ascontiguousarray(frames).tobytes())
    return path


def read_frames(path, grid: SpatialGrid) -> np.ndarray:
    raw = Path(path).read_bytes()
    magic, version, digest, count = _FRAME_HEADER.unpack_from(raw)
    if magic != _FRAME_MAGIC or version != 1:
        raise ValueError(f"{path}: not a frame file")
    if digest.decode() != grid.digest():
        raise GridMismatchError(f"{path}: frames were written on a different grid")
    return np.frombuffer(raw, dtype="<f8", offset=_FRAME_HEADER.size).reshape(count, grid.n).copy()
