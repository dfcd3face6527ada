"""Binary snapshot format for field states.

Little-endian, 72-byte header followed by four row-major float64 arrays
(A1, A2, Re Phi, Im Phi), each of shape (nx, ny) in C order:

    offset  size  field
    0       4     magic "CSSV"
    4       4     version (u32, currently 1)
    8       4     nx (u32)
    12      4     ny (u32)
    16      8     Lx (f64)
    24      8     Ly (f64)
    32      8     N  (i64)
    40      8     mu (f64)
    48      1     sigma (i8)
    49      7     padding (zero)
    56      8     lambda (f64, = 1 + sigma/mu, informational)
    64      8     tau (f64)

Readers reject unknown magic or version.  (The field list forces 65
packed bytes, so the header is padded to 72 for 8-byte alignment.)
"""

from __future__ import annotations

import json
import struct

import numpy as np

from .fields import FieldState, GaugeField, HiggsField
from .grid import make_grid

MAGIC = b"CSSV"
VERSION = 1
_HEADER = struct.Struct("<4sIIIddqdb7xdd")


class SnapshotError(ValueError):
    """Malformed or unsupported snapshot file."""


def write_snapshot(path, state):
    grid = state.grid
    header = _HEADER.pack(
        MAGIC, VERSION, grid.nx, grid.ny, grid.Lx, grid.Ly, grid.N,
        state.mu, state.sigma, state.lam, state.tau,
    )
    with open(path, "wb") as fh:
        fh.write(header)
        for arr in (state.gauge.a[0], state.gauge.a[1],
                    state.higgs.phi.real, state.higgs.phi.imag):
            fh.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())


def read_snapshot(path):
    with open(path, "rb") as fh:
        raw = fh.read(_HEADER.size)
        if len(raw) < _HEADER.size:
            raise SnapshotError("truncated snapshot header")
        magic, version, nx, ny, Lx, Ly, N, mu, sigma, lam, tau = _HEADER.unpack(raw)
        if magic != MAGIC:
            raise SnapshotError(f"bad magic {magic!r}")
        if version != VERSION:
            raise SnapshotError(f"unsupported snapshot version {version}")
        count = nx * ny
        data = np.frombuffer(fh.read(4 * count * 8), dtype="<f8")
        if data.size != 4 * count:
            raise SnapshotError("truncated snapshot payload")
    grid = make_grid(Lx, Ly, nx, ny, N)
    a = np.empty((2, nx, ny))
    a[0] = data[:count].reshape(nx, ny)
    a[1] = data[count:2 * count].reshape(nx, ny)
    phi = (data[2 * count:3 * count] + 1j * data[3 * count:]).reshape(nx, ny)
    return FieldState(GaugeField(grid, a), HiggsField(grid, phi.copy()),
                      mu, int(sigma), tau)


def write_sidecar(path, payload):
    """JSON sidecar with solver metadata (sorted keys for determinism)."""
    with open(path, "w") as fh:
        json.dump(payload, fh, sort_keys=True, indent=2)
        fh.write("\n")
