"""Binary on-disk formats: timestamp matrices, latent clips, checkpoints.

All formats are little-endian with a fixed magic prefix.  Matrices and
latents share one container (float32 payload, row-major)::

    magic[4] | uint32 rows | uint32 cols | float64 frame_seconds
    | float64 duration | rows*cols float32

Checkpoints store named float64 tensors after a JSON header::

    b"TGCK" | uint64 header_len | header JSON (utf-8) | raw tensor data

The header lists tensor names and shapes in payload order plus an arbitrary
config object; save followed by load is bit-exact.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from .errors import TempogenError

__all__ = [
    "FormatError",
    "write_matrix",
    "read_matrix",
    "write_latent",
    "read_latent",
    "save_checkpoint",
    "load_checkpoint",
]

_MATRIX_MAGIC = b"TSM1"
_LATENT_MAGIC = b"LAT1"
_CKPT_MAGIC = b"TGCK"
_GRID_HEADER = struct.Struct("<IIdd")


class FormatError(TempogenError):
    pass


def _write_grid(path, magic: bytes, values: np.ndarray, frame_seconds: float, duration: float):
    values = np.ascontiguousarray(values, dtype=np.float32)
    if values.ndim != 2:
        raise FormatError(f"expected a 2-D array, got shape {values.shape}")
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as fh:
        fh.write(magic)
        fh.write(_GRID_HEADER.pack(values.shape[0], values.shape[1], frame_seconds, duration))
        fh.write(values.astype("<f4").tobytes())


def _read_grid(path, magic: bytes) -> tuple[np.ndarray, float, float]:
    with open(path, "rb") as fh:
        got = fh.read(4)
        if got != magic:
            raise FormatError(f"{path}: bad magic {got!r}, expected {magic!r}")
        rows, cols, frame_seconds, duration = _GRID_HEADER.unpack(fh.read(_GRID_HEADER.size))
        payload = fh.read(rows * cols * 4)
    if len(payload) != rows * cols * 4:
        raise FormatError(f"{path}: truncated payload")
    values = np.frombuffer(payload, dtype="<f4").reshape(rows, cols)
    return values.astype(np.float64), frame_seconds, duration


def write_matrix(path, matrix) -> None:
    """Write a TimestampMatrix (or compatible object) to disk."""
    _write_grid(path, _MATRIX_MAGIC, matrix.values, matrix.frame_duration, matrix.duration)


def read_matrix(path):
    from .encoding import TimestampMatrix

    values, frame_seconds, duration = _read_grid(path, _MATRIX_MAGIC)
    return TimestampMatrix(values=values, frame_duration=frame_seconds, duration=duration)


def write_latent(path, values: np.ndarray, frame_seconds: float, duration: float) -> None:
    _write_grid(path, _LATENT_MAGIC, values, frame_seconds, duration)


def read_latent(path) -> tuple[np.ndarray, float, float]:
    """Returns (values (frames, dim) float64, frame_seconds, duration)."""
    return _read_grid(path, _LATENT_MAGIC)


def save_checkpoint(path, tensors: dict[str, np.ndarray], config: dict) -> None:
    """Write named float64 arrays with a JSON header; round trip is bit-exact."""
    names = list(tensors)
    header = {
        "version": 1,
        "config": config,
        "tensors": [{"name": n, "shape": list(np.shape(tensors[n]))} for n in names],
    }
    blob = json.dumps(header, ensure_ascii=False).encode("utf-8")
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as fh:
        fh.write(_CKPT_MAGIC)
        fh.write(struct.pack("<Q", len(blob)))
        fh.write(blob)
        for name in names:
            arr = np.ascontiguousarray(tensors[name], dtype="<f8")
            fh.write(arr.tobytes())


def load_checkpoint(path) -> tuple[dict[str, np.ndarray], dict]:
    with open(path, "rb") as fh:
        got = fh.read(4)
        if got != _CKPT_MAGIC:
            raise FormatError(f"{path}: bad magic {got!r}, expected {_CKPT_MAGIC!r}")
        (header_len,) = struct.unpack("<Q", fh.read(8))
        header = json.loads(fh.read(header_len).decode("utf-8"))
        if header.get("version") != 1:
            raise FormatError(f"{path}: unsupported checkpoint version {header.get('version')}")
        tensors: dict[str, np.ndarray] = {}
        for meta in header["tensors"]:
            shape = tuple(meta["shape"])
            count = int(np.prod(shape)) if shape else 1
            payload = fh.read(count * 8)
            if len(payload) != count * 8:
                raise FormatError(f"{path}: truncated tensor {meta['name']!r}")
            tensors[meta["name"]] = np.frombuffer(payload, dtype="<f8").reshape(shape).copy()
    return tensors, header["config"]
