"""Binary checkpoint slices with a JSON sidecar.

Layout (little-endian): ``b"MAFL"``, u32 version, u32 n, u32 N, f64 time,
then ``N**(2n)`` f64 values in row-major order.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from mafl.torus import ScalarField, make_grid

MAGIC = b"MAFL"
VERSION = 1
_HEADER = struct.Struct("<4sIIId")


class CheckpointError(ValueError):
    pass


def encode(field: ScalarField, time: float) -> bytes:
    g = field.grid
    head = _HEADER.pack(MAGIC, VERSION, g.n, g.N, float(time))
    return head + np.ascontiguousarray(field.values, dtype="<f8").tobytes()


def decode(blob: bytes) -> tuple[ScalarField, float]:
    if len(blob) < _HEADER.size:
        raise CheckpointError("truncated header")
    magic, version, n, N, time = _HEADER.unpack_from(blob)
    if magic != MAGIC:
        raise CheckpointError(f"bad magic {magic!r}")
    if version != VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version}")
    grid = make_grid(n, N)
    payload = blob[_HEADER.size :]
    if len(payload) != 8 * grid.npoints:
        raise CheckpointError(f"payload has {len(payload)} bytes, expected {8 * grid.npoints}")
    values = np.frombuffer(payload, dtype="<f8").reshape(grid.shape).astype(float)
    return ScalarField(grid, values), time


def write(path, field: ScalarField, time: float, sidecar: dict | None = None) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(encode(field, time))
    if sidecar is not None:
        side = path.with_suffix(".json")
        side.write_text(json.dumps(sidecar, sort_keys=True, indent=1, allow_nan=False) + "\n")
    return path


def read(path) -> tuple[ScalarField, float, dict | None]:
    path = Path(path)
    field, time = decode(path.read_bytes())
    side = path.with_suffix(".json")
    meta = json.loads(side.read_text()) if side.exists() else None
    return field, time, meta
