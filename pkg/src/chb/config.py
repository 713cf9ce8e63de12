"""Flat dotted-key configuration and initial-condition generators.

The format is deliberately minimal: UTF-8 lines of `key = value`, `#`
comments, unknown keys rejected.  Every value is validated on load and
errors carry the offending key and line number.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .dynamics import SolverConfig
from .flow import PhysParams
from .grid import NEUMANN, PERIODIC, GridSpec, ScalarField
from .io import read_scalar
from .potential import Potential


class ConfigError(ValueError):
    def __init__(self, message: str, key: str | None = None, line: int | None = None):
        loc = ""
        if key is not None:
            loc += f" (key {key!r}"
            loc += f", line {line})" if line is not None else ")"
        elif line is not None:
            loc += f" (line {line})"
        super().__init__(message + loc)
        self.key = key
        self.line = line


@dataclass
class InitialCondition:
    kind: str = "spinodal"           # constant | spinodal | stripe | file
    value: float = 0.0               # constant level
    mean: float = 0.0                # spinodal background
    amplitude: float = 0.01          # spinodal noise amplitude
    seed: int = 0
    width: float = 0.5               # stripe width
    path: str = ""                   # snapshot to load


@dataclass
class ExperimentConfig:
    nu_list: tuple[float, ...] = (1e-1, 1e-2, 1e-3, 1e-4)
    t_final: float = 1.0             # sweep horizon
    depend_delta: float = 1e-6       # perturbation size
    depend_seed: int = 1
    radii: tuple[float, ...] = (1.0, 2.0, 4.0)
    probe_mean: float = 0.0
    probe_seed: int = 7
    fit_lo: float = 1.0              # decay-fit window
    fit_hi: float = float("inf")


@dataclass
class RunConfig:
    grid: GridSpec
    phys: PhysParams
    potential: Potential
    solver: SolverConfig
    ic: InitialCondition
    experiment: ExperimentConfig
    output_dir: str = "out"


def _parse_float(key, raw, line):
    try:
        v = float(raw)
    except ValueError:
        raise ConfigError(f"expected a number, got {raw!r}", key, line) from None
    if not math.isfinite(v):
        raise ConfigError(f"expected a finite number, got {raw!r}", key, line)
    return v


def _parse_float_or_inf(key, raw, line):
    try:
        v = float(raw)
    except ValueError:
        raise ConfigError(f"expected a number, got {raw!r}", key, line) from None
    if math.isnan(v):
        raise ConfigError(f"expected a number, got {raw!r}", key, line)
    return v


def _parse_int(key, raw, line):
    try:
        return int(raw)
    except ValueError:
        raise ConfigError(f"expected an integer, got {raw!r}", key, line) from None


def _parse_float_list(key, raw, line):
    try:
        return tuple(float(tok) for tok in raw.replace(",", " ").split())
    except ValueError:
        raise ConfigError(f"expected a list of numbers, got {raw!r}", key, line) from None


# key -> (target section, attribute, parser); parser None means raw string
_SCHEMA = {
    "grid.nx": ("grid", "nx", _parse_int),
    "grid.ny": ("grid", "ny", _parse_int),
    "grid.lx": ("grid", "lx", _parse_float),
    "grid.ly": ("grid", "ly", _parse_float),
    "phys.nu": ("phys", "nu", _parse_float),
    "phys.eta": ("phys", "eta", _parse_float),
    "phys.m": ("phys", "mobility", _parse_float),
    "phys.eps": ("phys", "eps", _parse_float),
    "phys.gamma": ("phys", "gamma", _parse_float),
    "potential.kind": ("potential", "kind", None),
    "potential.coeffs": ("potential", "coeffs", _parse_float_list),
    "solver.dt": ("solver", "dt", _parse_float),
    "solver.t_end": ("solver", "t_end", _parse_float),
    "solver.stab": ("solver", "stab", None),  # float or 'auto'
    "solver.bc": ("solver", "bc", None),
    "flow.tol": ("solver", "flow_tol", _parse_float),
    "flow.max_iters": ("solver", "flow_max_iters", _parse_int),
    "output.dir": ("output", "dir", None),
    "output.cadence": ("solver", "cadence", _parse_int),
    "output.snapshot_every": ("solver", "snapshot_every", _parse_int),
    "ic.kind": ("ic", "kind", None),
    "ic.value": ("ic", "value", _parse_float),
    "ic.mean": ("ic", "mean", _parse_float),
    "ic.amplitude": ("ic", "amplitude", _parse_float),
    "ic.seed": ("ic", "seed", _parse_int),
    "ic.width": ("ic", "width", _parse_float),
    "ic.path": ("ic", "path", None),
    "experiment.nu_list": ("experiment", "nu_list", _parse_float_list),
    "experiment.t_final": ("experiment", "t_final", _parse_float),
    "experiment.depend_delta": ("experiment", "depend_delta", _parse_float),
    "experiment.depend_seed": ("experiment", "depend_seed", _parse_int),
    "experiment.radii": ("experiment", "radii", _parse_float_list),
    "experiment.probe_mean": ("experiment", "probe_mean", _parse_float),
    "experiment.probe_seed": ("experiment", "probe_seed", _parse_int),
    "experiment.fit_lo": ("experiment", "fit_lo", _parse_float),
    "experiment.fit_hi": ("experiment", "fit_hi", _parse_float_or_inf),
}


def parse_config(text: str) -> RunConfig:
    """Parse and fully validate; the first offending key wins the error."""
    raw: dict[str, tuple[str, int]] = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        if "=" not in stripped:
            raise ConfigError(f"expected 'key = value', got {stripped!r}", line=lineno)
        key, _, value = stripped.partition("=")
        key = key.strip()
        value = value.strip()
        if key not in _SCHEMA:
            raise ConfigError(f"unknown key {key!r}", key, lineno)
        if key in raw:
            raise ConfigError("duplicate key", key, lineno)
        raw[key] = (value, lineno)

    sections: dict[str, dict] = {"grid": {}, "phys": {}, "potential": {},
                                 "solver": {}, "ic": {}, "experiment": {},
                                 "output": {}}
    for key, (value, lineno) in raw.items():
        section, attr, parser = _SCHEMA[key]
        sections[section][attr] = (parser(key, value, lineno) if parser else value, key, lineno)

    # defaults: unit square 64 x 64, M = eps = gamma = eta = 1, nu = 1, dt = 1e-3
    grid_args = {}
    for attr, (val, key, lineno) in sections["grid"].items():
        if attr in ("nx", "ny") and val < 4:
            raise ConfigError(f"{key} must be >= 4", key, lineno)
        if attr in ("lx", "ly") and val <= 0:
            raise ConfigError(f"{key} must be > 0", key, lineno)
        grid_args[attr] = val
    grid = GridSpec(**{"nx": 64, "ny": 64, "lx": 1.0, "ly": 1.0, **grid_args})

    phys_kwargs = {}
    for attr, (val, key, lineno) in sections["phys"].items():
        if attr in ("nu", "eta") and val < 0:
            raise ConfigError(f"{key} must be >= 0", key, lineno)
        if attr in ("mobility", "eps", "gamma") and val <= 0:
            raise ConfigError(f"{key} must be > 0", key, lineno)
        phys_kwargs[attr] = val
    try:
        phys = PhysParams(**phys_kwargs)
    except ValueError as exc:
        raise ConfigError(str(exc), "phys.nu") from None

    pot_kwargs = {k: v[0] for k, v in sections["potential"].items()}
    kind = pot_kwargs.get("kind", "quartic")
    if kind == "quartic":
        if "coeffs" in pot_kwargs:
            _, key, lineno = sections["potential"]["coeffs"]
            raise ConfigError("potential.coeffs only applies to kind=polynomial", key, lineno)
        pot = Potential.quartic()
    elif kind == "polynomial":
        if "coeffs" not in pot_kwargs:
            raise ConfigError("potential.coeffs required for kind=polynomial",
                              "potential.coeffs")
        try:
            pot = Potential.from_coeffs(pot_kwargs["coeffs"])
        except ValueError as exc:
            _, key, lineno = sections["potential"]["coeffs"]
            raise ConfigError(str(exc), key, lineno) from None
    else:
        _, key, lineno = sections["potential"]["kind"]
        raise ConfigError(f"unknown potential kind {kind!r}", key, lineno)

    solver_kwargs = {}
    for attr, (val, key, lineno) in sections["solver"].items():
        if attr == "stab":
            if val == "auto":
                val = None
            else:
                val = _parse_float(key, val, lineno)
                if val < 0:
                    raise ConfigError("solver.stab must be >= 0 or 'auto'", key, lineno)
        if attr == "bc" and val not in (NEUMANN, PERIODIC):
            raise ConfigError(f"solver.bc must be neumann or periodic, got {val!r}",
                              key, lineno)
        if attr == "dt" and val <= 0:
            raise ConfigError("solver.dt must be > 0", key, lineno)
        if attr == "t_end" and val < 0:
            raise ConfigError("solver.t_end must be >= 0", key, lineno)
        if attr == "cadence" and val < 1:
            raise ConfigError("output.cadence must be >= 1", key, lineno)
        if attr == "snapshot_every" and val < 0:
            raise ConfigError("output.snapshot_every must be >= 0", key, lineno)
        if attr == "flow_tol" and val <= 0:
            raise ConfigError("flow.tol must be > 0", key, lineno)
        if attr == "flow_max_iters" and val < 1:
            raise ConfigError("flow.max_iters must be >= 1", key, lineno)
        solver_kwargs[attr] = val
    try:
        solver = SolverConfig(**solver_kwargs)
    except ValueError as exc:
        raise ConfigError(str(exc), "solver.dt") from None

    ic_kwargs = {}
    for attr, (val, key, lineno) in sections["ic"].items():
        if attr == "kind" and val not in ("constant", "spinodal", "stripe", "file"):
            raise ConfigError(f"ic.kind must be one of constant|spinodal|stripe|file, "
                              f"got {val!r}", key, lineno)
        if attr == "amplitude" and val < 0:
            raise ConfigError("ic.amplitude must be >= 0", key, lineno)
        if attr == "width" and not 0 < val:
            raise ConfigError("ic.width must be > 0", key, lineno)
        ic_kwargs[attr] = val
    ic = InitialCondition(**ic_kwargs)
    if ic.kind == "file":
        if not ic.path:
            raise ConfigError("ic.path required for ic.kind = file", "ic.path")
        if not Path(ic.path).is_file():
            raise ConfigError(f"initial-condition file {ic.path!r} does not exist",
                              "ic.path")

    exp_kwargs = {}
    for attr, (val, key, lineno) in sections["experiment"].items():
        if attr == "nu_list":
            if not val or any(v <= 0 for v in val):
                raise ConfigError("experiment.nu_list must be positive", key, lineno)
            if any(a <= b for a, b in zip(val, val[1:])):
                raise ConfigError("experiment.nu_list must be strictly decreasing",
                                  key, lineno)
        if attr == "radii" and (not val or any(v <= 0 for v in val)):
            raise ConfigError("experiment.radii must be positive", key, lineno)
        if attr in ("t_final",) and val <= 0:
            raise ConfigError(f"experiment.{attr} must be > 0", key, lineno)
        if attr == "depend_delta" and val <= 0:
            raise ConfigError("experiment.depend_delta must be > 0", key, lineno)
        exp_kwargs[attr] = val
    experiment = ExperimentConfig(**exp_kwargs)

    out = sections["output"].get("dir", ("out", None, None))[0]
    return RunConfig(grid=grid, phys=phys, potential=pot, solver=solver,
                     ic=ic, experiment=experiment, output_dir=out)


def serialize(cfg: RunConfig) -> str:
    """Round-trippable text form (parse(serialize(c)) equals c)."""
    lines = [
        f"grid.nx = {cfg.grid.nx}",
        f"grid.ny = {cfg.grid.ny}",
        f"grid.lx = {cfg.grid.lx!r}",
        f"grid.ly = {cfg.grid.ly!r}",
        f"phys.nu = {cfg.phys.nu!r}",
        f"phys.eta = {cfg.phys.eta!r}",
        f"phys.m = {cfg.phys.mobility!r}",
        f"phys.eps = {cfg.phys.eps!r}",
        f"phys.gamma = {cfg.phys.gamma!r}",
        f"potential.kind = {cfg.potential.kind}",
    ]
    if cfg.potential.kind == "polynomial":
        lines.append("potential.coeffs = " + " ".join(repr(c) for c in cfg.potential.coeffs))
    lines += [
        f"solver.dt = {cfg.solver.dt!r}",
        f"solver.t_end = {cfg.solver.t_end!r}",
        "solver.stab = " + ("auto" if cfg.solver.stab is None else repr(cfg.solver.stab)),
        f"solver.bc = {cfg.solver.bc}",
        f"flow.tol = {cfg.solver.flow_tol!r}",
        f"flow.max_iters = {cfg.solver.flow_max_iters}",
        f"output.dir = {cfg.output_dir}",
        f"output.cadence = {cfg.solver.cadence}",
        f"output.snapshot_every = {cfg.solver.snapshot_every}",
        f"ic.kind = {cfg.ic.kind}",
        f"ic.value = {cfg.ic.value!r}",
        f"ic.mean = {cfg.ic.mean!r}",
        f"ic.amplitude = {cfg.ic.amplitude!r}",
        f"ic.seed = {cfg.ic.seed}",
        f"ic.width = {cfg.ic.width!r}",
    ]
    if cfg.ic.path:
        lines.append(f"ic.path = {cfg.ic.path}")
    lines += [
        "experiment.nu_list = " + " ".join(repr(v) for v in cfg.experiment.nu_list),
        f"experiment.t_final = {cfg.experiment.t_final!r}",
        f"experiment.depend_delta = {cfg.experiment.depend_delta!r}",
        f"experiment.depend_seed = {cfg.experiment.depend_seed}",
        "experiment.radii = " + " ".join(repr(v) for v in cfg.experiment.radii),
        f"experiment.probe_mean = {cfg.experiment.probe_mean!r}",
        f"experiment.probe_seed = {cfg.experiment.probe_seed}",
        f"experiment.fit_lo = {cfg.experiment.fit_lo!r}",
        f"experiment.fit_hi = {cfg.experiment.fit_hi!r}",
    ]
    return "\n".join(lines) + "\n"


def make_initial(ic: InitialCondition, grid: GridSpec, seed: int | None = None,
                 eps: float = 1.0, bc: str = NEUMANN) -> ScalarField:
    """Realize an initial-condition spec on a grid.

    spinodal: mean + amplitude * uniform(-1, 1) per cell from the seeded
    generator, then mean-corrected exactly.  stripe: a band of width
    `ic.width` centered at ly/2, profile tanh(signed distance / (sqrt(2)
    eps)).  file: a stored snapshot, grid checked.
    """
    if ic.kind == "constant":
        return ScalarField.full(grid, ic.value, bc)
    if ic.kind == "spinodal":
        rng = np.random.default_rng(ic.seed if seed is None else seed)
        vals = ic.mean + ic.amplitude * rng.uniform(-1.0, 1.0, grid.shape())
        vals -= vals.mean() - ic.mean
        vals -= vals.mean() - ic.mean  # second pass pins the mean to rounding
        return ScalarField(grid, vals, bc)
    if ic.kind == "stripe":
        _, Y = grid.cell_centers()
        signed = 0.5 * ic.width - np.abs(Y - 0.5 * grid.ly)
        vals = np.tanh(signed / (math.sqrt(2.0) * eps))
        return ScalarField(grid, vals, bc)
    if ic.kind == "file":
        f = read_scalar(ic.path, bc=bc)
        if f.grid != grid:
            raise ConfigError(
                f"snapshot grid {f.grid.nx}x{f.grid.ny} does not match configured "
                f"grid {grid.nx}x{grid.ny}", "ic.path")
        return f
    raise ConfigError(f"unknown ic kind {ic.kind!r}", "ic.kind")
