import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from chb.cli import main
from chb.config import (
    ConfigError,
    InitialCondition,
    make_initial,
    parse_config,
    serialize,
)
from chb.grid import GridSpec
from chb.io import read_scalar, write_scalar


def test_empty_config_gives_defaults():
    cfg = parse_config("")
    assert cfg.grid == GridSpec(64, 64, 1.0, 1.0)
    assert cfg.phys.nu == 1.0 and cfg.phys.eta == 1.0
    assert cfg.phys.mobility == 1.0 and cfg.phys.eps == 1.0 and cfg.phys.gamma == 1.0
    assert cfg.solver.dt == 1e-3
    assert cfg.solver.flow_tol == 1e-10
    assert cfg.solver.flow_max_iters == 10000
    assert cfg.potential.kind == "quartic"


def test_comments_and_blank_lines():
    cfg = parse_config("# a comment\n\nphys.nu = 0.5  # trailing comment\n")
    assert cfg.phys.nu == 0.5


def test_unknown_key_reports_line():
    with pytest.raises(ConfigError, match=r"unknown key.*line 3"):
        parse_config("# one\nphys.nu = 1\nbogus.key = 2\n")


def test_negative_nu_rejected():
    with pytest.raises(ConfigError, match="phys.nu must be >= 0"):
        parse_config("phys.nu = -1\n")


def test_malformed_line_reports_position():
    with pytest.raises(ConfigError, match="line 2"):
        parse_config("phys.nu = 1\nnot a key value pair\n")


def test_bad_number_reports_key():
    with pytest.raises(ConfigError, match="solver.dt"):
        parse_config("solver.dt = fast\n")


def test_duplicate_key_rejected():
    with pytest.raises(ConfigError, match="duplicate"):
        parse_config("phys.nu = 1\nphys.nu = 2\n")


def test_grid_bounds_checked():
    with pytest.raises(ConfigError, match="grid.nx"):
        parse_config("grid.nx = 2\n")
    with pytest.raises(ConfigError, match="grid.ly"):
        parse_config("grid.ly = 0\n")


def test_missing_ic_file_rejected(tmp_path):
    with pytest.raises(ConfigError, match="does not exist"):
        parse_config("ic.kind = file\nic.path = /nonexistent.chbf\n")


def test_polynomial_potential_parsed():
    cfg = parse_config("potential.kind = polynomial\n"
                       "potential.coeffs = 1 0 -2 0 1\n")
    assert cfg.potential.f(0.5) == pytest.approx(-1.5)


def test_stab_auto_and_value():
    assert parse_config("solver.stab = auto\n").solver.stab is None
    assert parse_config("solver.stab = 7.5\n").solver.stab == 7.5
    with pytest.raises(ConfigError, match="stab"):
        parse_config("solver.stab = -1\n")


def test_round_trip_simple():
    text = ("grid.nx = 16\ngrid.ny = 24\nphys.nu = 0.125\nphys.eps = 0.3\n"
            "solver.dt = 0.0005\nic.kind = stripe\nic.width = 0.25\n"
            "experiment.nu_list = 0.1 0.001\n")
    cfg = parse_config(text)
    assert parse_config(serialize(cfg)) == cfg


@st.composite
def config_texts(draw):
    parts = []
    if draw(st.booleans()):
        parts.append(f"grid.nx = {draw(st.integers(4, 64))}")
    if draw(st.booleans()):
        parts.append(f"grid.lx = {draw(st.floats(0.5, 4.0).map(lambda x: round(x, 3)))}")
    if draw(st.booleans()):
        parts.append(f"phys.nu = {draw(st.floats(0.0, 2.0).map(lambda x: round(x, 4)))}")
    if draw(st.booleans()):
        parts.append(f"phys.eps = {draw(st.floats(0.05, 1.0).map(lambda x: round(x, 3)))}")
    if draw(st.booleans()):
        parts.append(f"solver.dt = {draw(st.sampled_from(['1e-3', '5e-4', '0.01']))}")
    if draw(st.booleans()):
        parts.append(f"ic.kind = {draw(st.sampled_from(['constant', 'spinodal', 'stripe']))}")
    if draw(st.booleans()):
        parts.append(f"ic.seed = {draw(st.integers(0, 10))}")
    return "\n".join(parts) + "\n"


@given(config_texts())
@settings(max_examples=60, deadline=None)
def test_round_trip_property(text):
    try:
        cfg = parse_config(text)
    except ConfigError:
        return  # invalid combinations (eta=0 with nu=0 etc.) are out of scope
    assert parse_config(serialize(cfg)) == cfg


# ---------------------------------------------------------------------------
# initial conditions
# ---------------------------------------------------------------------------

def test_constant_initial_exact_mean():
    g = GridSpec(16, 16)
    f = make_initial(InitialCondition(kind="constant", value=0.3), g)
    assert np.all(f.values == 0.3)  # the field itself is exact
    assert f.mean() == pytest.approx(0.3, abs=1e-15)  # summation rounding only


def test_spinodal_deterministic_and_mean_corrected():
    g = GridSpec(32, 32)
    ic = InitialCondition(kind="spinodal", amplitude=0.01, seed=42, mean=0.2)
    a = make_initial(ic, g)
    b = make_initial(ic, g)
    assert np.array_equal(a.values, b.values)
    assert a.mean() == pytest.approx(0.2, abs=1e-15)
    assert np.abs(a.values - 0.2).max() <= 0.011


def test_spinodal_seed_changes_field():
    g = GridSpec(16, 16)
    a = make_initial(InitialCondition(kind="spinodal", seed=1), g)
    b = make_initial(InitialCondition(kind="spinodal", seed=2), g)
    assert not np.array_equal(a.values, b.values)


def test_stripe_profile_and_mean():
    from scipy.integrate import quad
    g = GridSpec(64, 64)
    eps = 0.1
    width = 0.5
    f = make_initial(InitialCondition(kind="stripe", width=width), g, eps=eps)
    assert np.all(np.abs(f.values) <= 1.0)
    # analytic mean of the profile by quadrature
    prof = lambda y: math.tanh((0.5 * width - abs(y - 0.5)) / (math.sqrt(2) * eps))
    exact, _ = quad(prof, 0.0, 1.0, limit=200)
    assert f.mean() == pytest.approx(exact, abs=1e-3)
    # band structure: +1 inside, -1 outside
    assert f.values[0, 32] > 0.9 and f.values[0, 2] < -0.9


def test_file_initial_round_trip(tmp_path):
    g = GridSpec(8, 8)
    rng = np.random.default_rng(0)
    from chb.grid import ScalarField
    f = ScalarField(g, rng.standard_normal(g.shape()))
    path = tmp_path / "ic.chbf"
    write_scalar(path, f)
    got = make_initial(InitialCondition(kind="file", path=str(path)), g)
    assert np.array_equal(got.values, f.values)
    with pytest.raises(ConfigError, match="does not match"):
        make_initial(InitialCondition(kind="file", path=str(path)), GridSpec(16, 16))


# ---------------------------------------------------------------------------
# CLI
# ---------------------------------------------------------------------------

def write_cfg(tmp_path, text):
    p = tmp_path / "run.cfg"
    p.write_text(text, encoding="utf-8")
    return str(p)


def test_cli_run_smoke(tmp_path, capsys):
    cfg = write_cfg(tmp_path, f"""
grid.nx = 16
grid.ny = 16
phys.eps = 0.25
solver.dt = 1e-3
solver.t_end = 0.02
ic.kind = spinodal
ic.amplitude = 0.05
output.dir = {tmp_path / 'out'}
output.cadence = 5
""")
    assert main(["run", cfg]) == 0
    out = tmp_path / "out"
    assert (out / "diagnostics.csv").is_file()
    assert (out / "phi_final.chbf").is_file()
    lines = (out / "diagnostics.csv").read_text().strip().split("\n")
    assert len(lines) == 1 + 5  # header + records at cadence 5 incl. final


def test_cli_missing_config_exits_2(tmp_path):
    assert main(["run", str(tmp_path / "absent.cfg")]) == 2


def test_cli_bad_config_exits_2(tmp_path):
    cfg = write_cfg(tmp_path, "phys.nu = -1\n")
    assert main(["run", cfg]) == 2


def test_cli_sweep_produces_csv_and_report(tmp_path):
    cfg = write_cfg(tmp_path, f"""
grid.nx = 16
grid.ny = 16
phys.eps = 0.2
solver.dt = 1e-3
ic.kind = spinodal
ic.amplitude = 0.05
ic.seed = 9
output.dir = {tmp_path / 'out'}
experiment.nu_list = 1e-1 1e-2 1e-3 1e-4
experiment.t_final = 0.02
""")
    assert main(["sweep", cfg]) == 0
    rows = (tmp_path / "out" / "sweep.csv").read_text().strip().split("\n")
    assert rows[0] == "nu,sup_phi_diff_h1_sq,int_u_diff_sq,runtime_s"
    assert len(rows) == 5
    assert (tmp_path / "out" / "sweep_report.txt").is_file()


def test_cli_equilibrium_report(tmp_path):
    cfg = write_cfg(tmp_path, f"""
grid.nx = 16
grid.ny = 16
phys.eps = 1.0
solver.dt = 1e-2
solver.t_end = 6.0
output.cadence = 10
ic.kind = spinodal
ic.amplitude = 0.2
output.dir = {tmp_path / 'out'}
experiment.fit_lo = 0.5
""")
    assert main(["equilibrium", cfg]) == 0
    out = tmp_path / "out"
    assert (out / "phi_star.chbf").is_file()
    assert (out / "ratefit.csv").is_file()
    header = (out / "ratefit.csv").read_text().split("\n")[0]
    assert header == "model,exponent,theta_hat,prefactor,r2,window_lo,window_hi"


def test_cli_probe_and_depend(tmp_path):
    cfg = write_cfg(tmp_path, f"""
grid.nx = 16
grid.ny = 16
phys.eps = 0.25
solver.dt = 1e-3
solver.t_end = 0.5
output.cadence = 10
ic.kind = spinodal
ic.amplitude = 0.05
output.dir = {tmp_path / 'out'}
experiment.radii = 1 2
experiment.depend_delta = 1e-6
""")
    assert main(["probe", cfg]) == 0
    assert (tmp_path / "out" / "probe.csv").is_file()
    assert main(["depend", cfg]) == 0
    assert (tmp_path / "out" / "depend.csv").is_file()


def test_cli_validate_exit_zero():
    assert main(["validate"]) == 0
