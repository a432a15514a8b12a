"""Tensor checkpoint directories.

Layout::

    <dir>/manifest.json     [{"name": ..., "shape": [...], "dtype": "f32"}, ...]
    <dir>/<name>            raw little-endian float32 blob, row-major
"""

from __future__ import annotations

import json
import os
from pathlib import Path
from typing import Mapping

import numpy as np

from .errors import DataError

MANIFEST = "manifest.json"
_DTYPE = np.dtype("<f4")


def _check_name(name: str):
    if not name or name == MANIFEST or os.sep in name or name.startswith("."):
        raise DataError(f"invalid tensor name for checkpoint: {name!r}")


def save_tensors(directory, tensors: Mapping[str, np.ndarray]) -> Path:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    manifest = []
    for name, value in tensors.items():
        _check_name(name)
        arr = np.ascontiguousarray(np.asarray(getattr(value, "data", value)), dtype=_DTYPE)
        (directory / name).write_bytes(arr.tobytes(order="C"))
        manifest.append({"name": name, "shape": list(arr.shape), "dtype": "f32"})
    (directory / MANIFEST).write_text(json.dumps(manifest, indent=1))
    return directory


def load_tensors(directory) -> dict:
    directory = Path(directory)
    try:
        manifest = json.loads((directory / MANIFEST).read_text())
    except FileNotFoundError as exc:
        raise DataError(f"no {MANIFEST} in {directory}") from exc
    out = {}
    for entry in manifest:
        if entry.get("dtype") != "f32":
            raise DataError(f"unsupported dtype {entry.get('dtype')!r} for {entry['name']}")
        shape = tuple(entry["shape"])
        raw = (directory / entry["name"]).read_bytes()
        expected = int(np.prod(shape, dtype=np.int64)) * _DTYPE.itemsize
        if len(raw) != expected:
            raise DataError(f"blob {entry['name']} has {len(raw)} bytes, expected {expected}")
        out[entry["name"]] = np.frombuffer(raw, dtype=_DTYPE).reshape(shape).astype(np.float32)
    return out
