"""LTHS binary snapshots.

Layout: b"LTHS", u32 LE version, u64 LE header length, UTF-8 JSON header
{dim, lengths, interior_counts, field_names, time}, then each field as raw
LE float64 in header order, row-major over the interior nodes. Vector fields
are stored one component per field (``u0``, ``u1``, ...).
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from .grid import GridSpec, State

MAGIC = b"LTHS"
VERSION = 1


class SnapshotError(ValueError):
    pass


def state_fields(s: State) -> dict[str, np.ndarray]:
    out = {}
    for name, vec in (("u", s.u), ("v", s.v)):
        for i, comp in enumerate(vec):
            out[f"{name}{i}"] = comp
    out["theta"] = s.theta
    return out


def write_fields(path, grid: GridSpec, fields: dict[str, np.ndarray], time: float) -> None:
    header = dict(grid.to_dict(), field_names=list(fields), time=float(time))
    blob = json.dumps(header).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", VERSION))
        fh.write(struct.pack("<Q", len(blob)))
        fh.write(blob)
        for name, arr in fields.items():
            arr = grid.check_scalar(arr, name)
            fh.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())


def read_fields(path) -> tuple[GridSpec, dict[str, np.ndarray], float]:
    data = Path(path).read_bytes()
    if data[:4] != MAGIC:
        raise SnapshotError(f"{path}: bad magic {data[:4]!r}")
    (version,) = struct.unpack_from("<I", data, 4)
    if version != VERSION:
        raise SnapshotError(f"{path}: unsupported version {version}")
    (hlen,) = struct.unpack_from("<Q", data, 8)
    header = json.loads(data[16:16 + hlen].decode("utf-8"))
    grid = GridSpec(tuple(header["lengths"]), tuple(header["interior_counts"]))
    if header["dim"] != grid.dim:
        raise SnapshotError(f"{path}: header dim {header['dim']} disagrees with lengths")
    offset = 16 + hlen
    nbytes = 8 * grid.node_count
    fields = {}
    for name in header["field_names"]:
        chunk = data[offset:offset + nbytes]
        if len(chunk) != nbytes:
            raise SnapshotError(f"{path}: truncated field {name}")
        fields[name] = np.frombuffer(chunk, dtype="<f8").reshape(grid.shape).astype(float)
        offset += nbytes
    if offset != len(data):
        raise SnapshotError(f"{path}: {len(data) - offset} trailing bytes")
    return grid, fields, float(header["time"])


def write_state(path, s: State, grid: GridSpec) -> None:
    write_fields(path, grid, state_fields(s), s.t)


def read_state(path) -> tuple[State, GridSpec]:
    grid, fields, t = read_fields(path)
    try:
        u = np.stack([fields[f"u{i}"] for i in range(grid.dim)])
        v = np.stack([fields[f"v{i}"] for i in range(grid.dim)])
        theta = fields["theta"]
    except KeyError as exc:
        raise SnapshotError(f"{path}: missing state field {exc}") from None
    return State(t, u, v, theta, grid), grid
