"""Binary field snapshots and diagnostics CSV output.

Snapshot layout (little endian): a 32-byte header
    magic "CHBF" | u32 version=1 | u32 nx | u32 ny | f64 lx | f64 ly
followed for scalar fields by nx*ny f64 values, row-major with y as the
outer (slow) index.  Vector snapshots append a single u8 kind tag (=1)
after the header, then the ux block ((nx+1)*ny values) and the uy block
(nx*(ny+1) values), each stored y-outer.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .grid import GridSpec, MacVector, ScalarField

MAGIC = b"CHBF"
VERSION = 1
KIND_MAC = 1
_HEADER = struct.Struct("<4sIIIdd")

assert _HEADER.size == 32


def _pack_header(grid: GridSpec) -> bytes:
    return _HEADER.pack(MAGIC, VERSION, grid.nx, grid.ny, grid.lx, grid.ly)


def _read_header(buf: bytes, path) -> GridSpec:
    if len(buf) < _HEADER.size:
        raise ValueError(f"{path}: truncated snapshot header")
    magic, version, nx, ny, lx, ly = _HEADER.unpack_from(buf)
    if magic != MAGIC:
        raise ValueError(f"{path}: bad magic {magic!r}")
    if version != VERSION:
        raise ValueError(f"{path}: unsupported snapshot version {version}")
    return GridSpec(nx, ny, lx, ly)


def write_scalar(path, f: ScalarField) -> None:
    data = np.ascontiguousarray(f.values.T, dtype="<f8")  # y-outer
    with open(path, "wb") as fh:
        fh.write(_pack_header(f.grid))
        fh.write(data.tobytes())


def read_scalar(path, bc: str = "neumann") -> ScalarField:
    buf = Path(path).read_bytes()
    grid = _read_header(buf, path)
    expected = _HEADER.size + 8 * grid.nx * grid.ny
    if len(buf) != expected:
        raise ValueError(f"{path}: expected {expected} bytes, got {len(buf)}")
    vals = np.frombuffer(buf, dtype="<f8", offset=_HEADER.size).reshape(grid.ny, grid.nx)
    return ScalarField(grid, vals.T.copy(), bc)


def write_mac(path, v: MacVector) -> None:
    ux = np.ascontiguousarray(v.ux.T, dtype="<f8")
    uy = np.ascontiguousarray(v.uy.T, dtype="<f8")
    with open(path, "wb") as fh:
        fh.write(_pack_header(v.grid))
        fh.write(struct.pack("<B", KIND_MAC))
        fh.write(ux.tobytes())
        fh.write(uy.tobytes())


def read_mac(path, bc: str = "noslip") -> MacVector:
    buf = Path(path).read_bytes()
    grid = _read_header(buf, path)
    nux = (grid.nx + 1) * grid.ny
    nuy = grid.nx * (grid.ny + 1)
    expected = _HEADER.size + 1 + 8 * (nux + nuy)
    if len(buf) != expected:
        raise ValueError(f"{path}: expected {expected} bytes, got {len(buf)}")
    (kind,) = struct.unpack_from("<B", buf, _HEADER.size)
    if kind != KIND_MAC:
        raise ValueError(f"{path}: unexpected kind tag {kind}")
    off = _HEADER.size + 1
    ux = np.frombuffer(buf, dtype="<f8", offset=off, count=nux).reshape(grid.ny, grid.nx + 1)
    off += 8 * nux
    uy = np.frombuffer(buf, dtype="<f8", offset=off, count=nuy).reshape(grid.ny + 1, grid.nx)
    return MacVector(grid, ux.T.copy(), uy.T.copy(), bc)


DIAGNOSTICS_HEADER = "t,mass,energy,grad_mu_sq,visc_diss,darcy_diss,residual,phi_l2,phi_h1"


def format_float(x: float) -> str:
    """Full f64 precision (17 significant digits), locale independent."""
    return format(float(x), ".17g")


def diagnostics_csv_text(records) -> str:
    """The diagnostics CSV as a string, one row per record, full precision."""
    lines = [DIAGNOSTICS_HEADER]
    for r in records:
        row = (r.t, r.mass, r.energy, r.grad_mu_sq, r.visc_diss,
               r.darcy_diss, r.dissipation_residual, r.phi_l2, r.phi_h1)
        lines.append(",".join(format_float(x) for x in row))
    return "\n".join(lines) + "\n"


def write_diagnostics_csv(path, records) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(diagnostics_csv_text(records))


def write_csv(path, header: str, rows) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(header + "\n")
        for row in rows:
            fh.write(",".join(x if isinstance(x, str) else format_float(x) for x in row) + "\n")
