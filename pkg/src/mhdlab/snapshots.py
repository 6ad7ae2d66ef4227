"""
Binary snapshot files for MHD states.

Layout (little-endian throughout)::

    bytes 0..7    magic "MHDSNAP1"
    bytes 8..11   uint32  grid points per axis n
    bytes 12..19  float64 box_length
    bytes 20..27  float64 time
    bytes 28..31  uint32  field count (always 6: u1 u2 u3 b1 b2 b3)
    bytes 32..    6 * n^3 float64 values, x-fastest within each component

Round-trips are bit-exact; format errors name the byte offset at which the
problem was detected.
"""

from __future__ import annotations

import struct

import numpy as np

from .grid import GridSpec, VectorField
from .solver import MhdState

MAGIC = b"MHDSNAP1"
_HEADER = struct.Struct("<8sIddI")
HEADER_SIZE = _HEADER.size
FIELD_COUNT = 6


class SnapshotFormatError(ValueError):
    """Malformed snapshot file; ``offset`` is the failing byte position."""

    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (at byte offset {offset})")
        self.offset = offset


def write_snapshot(state: MhdState, path) -> None:
    """Write a state; the payload is the raw float64 samples of u then b."""
    grid = state.grid
    u = state.u.to_physical().data
    b = state.b.to_physical().data
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(MAGIC, grid.n, grid.box_length, state.time, FIELD_COUNT))
        for comp in (*u, *b):
            # x-fastest: the first (x) index varies fastest in the file
            fh.write(np.ascontiguousarray(comp.ravel(order="F"), dtype="<f8").tobytes())


def read_snapshot(path) -> MhdState:
    """Read a state written by :func:`write_snapshot`; bit-exact round-trip."""
    with open(path, "rb") as fh:
        raw = fh.read()

    if len(raw) < HEADER_SIZE:
        raise SnapshotFormatError("truncated header", len(raw))
    magic, n, box_length, time, count = _HEADER.unpack_from(raw, 0)
    if magic != MAGIC:
        raise SnapshotFormatError(f"bad magic {magic!r}", 0)
    if count != FIELD_COUNT:
        raise SnapshotFormatError(f"expected {FIELD_COUNT} fields, got {count}", 28)

    try:
        grid = GridSpec(n=int(n), box_length=float(box_length))
    except ValueError as exc:
        raise SnapshotFormatError(f"invalid grid header: {exc}", 8) from exc

    expected = HEADER_SIZE + FIELD_COUNT * n**3 * 8
    if len(raw) != expected:
        offset = min(len(raw), expected)
        raise SnapshotFormatError(
            f"payload length {len(raw) - HEADER_SIZE} != {expected - HEADER_SIZE}",
            offset,
        )

    flat = np.frombuffer(raw, dtype="<f8", offset=HEADER_SIZE)
    comps = flat.reshape(FIELD_COUNT, n**3)
    shape = (n, n, n)
    arrays = [comps[i].reshape(shape, order="F") for i in range(FIELD_COUNT)]
    u = np.ascontiguousarray(np.stack(arrays[:3]))
    b = np.ascontiguousarray(np.stack(arrays[3:]))
    return MhdState(
        u=VectorField(grid, u),
        b=VectorField(grid, b),
        time=float(time),
    )
