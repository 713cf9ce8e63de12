import struct

import numpy as np
import pytest

from chb.grid import GridSpec, MacVector, ScalarField
from chb.io import (
    DIAGNOSTICS_HEADER,
    diagnostics_csv_text,
    format_float,
    read_mac,
    read_scalar,
    write_mac,
    write_scalar,
)


def test_scalar_round_trip(tmp_path):
    g = GridSpec(8, 6, 2.0, 1.5)
    rng = np.random.default_rng(0)
    f = ScalarField(g, rng.standard_normal(g.shape()))
    path = tmp_path / "f.chbf"
    write_scalar(path, f)
    back = read_scalar(path)
    assert back.grid == g
    assert np.array_equal(back.values, f.values)


def test_header_layout(tmp_path):
    g = GridSpec(5, 7, 1.25, 0.5)
    f = ScalarField.full(g, 1.0)
    path = tmp_path / "f.chbf"
    write_scalar(path, f)
    raw = path.read_bytes()
    assert len(raw) == 32 + 8 * 5 * 7
    magic, version, nx, ny, lx, ly = struct.unpack_from("<4sIIIdd", raw)
    assert magic == b"CHBF" and version == 1
    assert (nx, ny) == (5, 7) and (lx, ly) == (1.25, 0.5)


def test_scalar_row_major_y_outer(tmp_path):
    # values must be stored with y as the outer (slow) index
    g = GridSpec(4, 4)
    vals = np.arange(16, dtype=float).reshape(4, 4)  # [i, j]
    path = tmp_path / "f.chbf"
    write_scalar(path, ScalarField(g, vals))
    data = np.frombuffer(path.read_bytes(), dtype="<f8", offset=32)
    # first stored row is j = 0 over all i
    assert np.array_equal(data[:4], vals[:, 0])


def test_mac_round_trip(tmp_path):
    g = GridSpec(6, 9)
    rng = np.random.default_rng(1)
    v = MacVector(g, rng.standard_normal((7, 9)), rng.standard_normal((6, 10)),
                  "nopenetration")
    path = tmp_path / "u.chbf"
    write_mac(path, v)
    back = read_mac(path, bc="nopenetration")
    assert np.array_equal(back.ux, v.ux)
    assert np.array_equal(back.uy, v.uy)
    # kind tag follows the 32-byte header
    raw = path.read_bytes()
    assert raw[32] == 1


def test_corrupt_snapshots_rejected(tmp_path):
    g = GridSpec(4, 4)
    path = tmp_path / "f.chbf"
    write_scalar(path, ScalarField.zeros(g))
    raw = bytearray(path.read_bytes())
    raw[:4] = b"NOPE"
    bad = tmp_path / "bad.chbf"
    bad.write_bytes(bytes(raw))
    with pytest.raises(ValueError, match="magic"):
        read_scalar(bad)
    trunc = tmp_path / "trunc.chbf"
    trunc.write_bytes(path.read_bytes()[:40])
    with pytest.raises(ValueError, match="expected"):
        read_scalar(trunc)


def test_format_float_full_precision():
    x = 1.0 / 3.0
    assert float(format_float(x)) == x
    assert format_float(0.0) == "0"


def test_diagnostics_csv_shape():
    from chb.dynamics import DiagnosticsRecord
    recs = [DiagnosticsRecord(t=0.0, mass=1.0, energy=2.0, grad_mu_sq=0.5,
                              visc_diss=0.1, darcy_diss=0.2,
                              dissipation_residual=0.0, phi_l2=1.0, phi_h1=2.0)]
    text = diagnostics_csv_text(recs)
    lines = text.strip().split("\n")
    assert lines[0] == DIAGNOSTICS_HEADER
    assert lines[0] == "t,mass,energy,grad_mu_sq,visc_diss,darcy_diss,residual,phi_l2,phi_h1"
    assert len(lines) == 2 and len(lines[1].split(",")) == 9
