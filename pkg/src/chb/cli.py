"""Command-line entry point.

Subcommands: run, sweep, depend, equilibrium, probe, validate.
Exit codes: 0 success, 2 configuration error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import logging
import math
import os
import sys
from pathlib import Path

import numpy as np

from .config import ConfigError, RunConfig, make_initial, parse_config
from .dynamics import run as run_sim
from .equilibrium import equilibrium_experiment
from .experiments import continuous_dependence, dissipativity_probe, smooth_noise, viscosity_sweep
from .flow import FlowSolverError
from .grid import ScalarField
from .io import format_float, write_csv, write_diagnostics_csv, write_scalar
from .validate import run_validation

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3

log = logging.getLogger("chb")


def _load_config(path: str) -> RunConfig:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {path!r}: {exc}") from None
    return parse_config(text)


def _initial_field(cfg: RunConfig) -> ScalarField:
    return make_initial(cfg.ic, cfg.grid, eps=cfg.phys.eps, bc=cfg.solver.bc)


def _outdir(cfg: RunConfig) -> Path:
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_run(cfg: RunConfig) -> int:
    out = _outdir(cfg)
    solver_cfg = cfg.solver
    if solver_cfg.snapshot_every:
        solver_cfg.outdir = str(out)
    phi0 = _initial_field(cfg)
    result = run_sim(phi0, cfg.phys, cfg.potential, solver_cfg)
    write_diagnostics_csv(out / "diagnostics.csv", result.records)
    write_scalar(out / "phi_final.chbf", result.state.phi)
    if result.blowup_step is not None:
        print(f"blow-up at step {result.blowup_step}; partial diagnostics in {out}",
              file=sys.stderr)
        return EXIT_NUMERICAL
    last = result.records[-1]
    print(f"run finished: t = {last.t:g}, mass = {last.mass:.12g}, "
          f"energy = {last.energy:.12g}, records = {len(result.records)}")
    if result.cfl_violations:
        print(f"warning: convective CFL guard exceeded on {result.cfl_violations} "
              f"steps (max {result.cfl_max:.3g})", file=sys.stderr)
    return EXIT_OK


def cmd_sweep(cfg: RunConfig) -> int:
    out = _outdir(cfg)
    phi0 = _initial_field(cfg)
    sweep = viscosity_sweep(phi0, list(cfg.experiment.nu_list), cfg.phys,
                            cfg.potential, cfg.solver,
                            t_final=cfg.experiment.t_final)
    rows = [(nu, d, ui, rt) for nu, d, ui, rt in
            zip(sweep.nu_list, sweep.diff_sq, sweep.u_diff_int, sweep.runtimes)]
    write_csv(out / "sweep.csv", "nu,sup_phi_diff_h1_sq,int_u_diff_sq,runtime_s", rows)
    lines = [
        f"viscosity sweep over nu = {sweep.nu_list}",
        f"sup_t ||phi_nu - phi_0||_1^2 = {[format_float(d) for d in sweep.diff_sq]}",
        f"strictly decreasing in nu: {sweep.monotone}",
        f"log-log slope: {sweep.slope:.4f}",
        f"fitted C with diff^2 <= C sqrt(nu): {sweep.c_fit:.6g}",
        f"floored points: {sweep.floored}",
    ]
    (out / "sweep_report.txt").write_text("\n".join(lines) + "\n", encoding="utf-8")
    print("\n".join(lines))
    return EXIT_OK


def cmd_depend(cfg: RunConfig) -> int:
    out = _outdir(cfg)
    base = _initial_field(cfg)
    delta = cfg.experiment.depend_delta
    noise = smooth_noise(cfg.grid, cfg.experiment.depend_seed, bc=cfg.solver.bc)
    pert = ScalarField(cfg.grid, base.values + delta * noise.values, base.bc)
    pert.values += base.mean() - pert.values.mean()
    dep = continuous_dependence(base, pert, cfg.phys, cfg.potential, cfg.solver)
    rows = list(zip(dep.times, dep.gap_sq))
    write_csv(out / "depend.csv", "t,gap_h1_sq", rows)
    lines = [
        f"initial gap^2 = {format_float(dep.delta0)}",
        f"amplification max gap^2/delta0 = {dep.amplification:.6g}",
        f"fitted growth rate K (gap^2 ~ delta0 e^(K t)): {dep.growth_rate:.6g}",
        f"envelope rate K_bound: {dep.growth_bound:.6g}",
        f"velocity gap integral: {format_float(dep.velocity_gap_integral)}",
    ]
    (out / "depend_report.txt").write_text("\n".join(lines) + "\n", encoding="utf-8")
    print("\n".join(lines))
    return EXIT_OK


def cmd_equilibrium(cfg: RunConfig) -> int:
    out = _outdir(cfg)
    phi0 = _initial_field(cfg)
    window = (cfg.experiment.fit_lo, cfg.experiment.fit_hi)
    rep = equilibrium_experiment(phi0, cfg.phys, cfg.potential, cfg.solver,
                                 fit_window=window)
    write_scalar(out / "phi_star.chbf", rep.phi_star)
    write_csv(out / "equilibrium_decay.csv", "t,dist_h1,u_norm",
              list(zip(rep.times, rep.distance_h1, rep.velocity_norm)))
    if rep.fit is not None:
        f = rep.fit
        write_csv(out / "ratefit.csv",
                  "model,exponent,theta_hat,prefactor,r2,window_lo,window_hi",
                  [(f.model, f.exponent, f.theta_hat, f.prefactor, f.goodness,
                    f.window[0], f.window[1])])
    lines = [f"stationarity residual of the final state: {rep.residual:.3e}"]
    if rep.fit is not None:
        f = rep.fit
        lines += [
            f"preferred model: {f.model}",
            f"algebraic exponent e = {f.exponent:.4f} (theta_hat = {f.theta_hat:.4f}, "
            f"R^2 = {f.goodness:.4f})",
            f"exponential rate = {f.exp_rate:.4f} (R^2 = {f.exp_goodness:.4f})",
        ]
    else:
        lines.append(f"decay fit unavailable: {rep.fit_error}")
    if rep.velocity is not None:
        v = rep.velocity
        lines.append(f"velocity decay check: {'ok' if v.ok else 'VIOLATED'} "
                     f"(final ||u|| = {v.final_norm:.3e})")
    (out / "equilibrium_report.txt").write_text("\n".join(lines) + "\n", encoding="utf-8")
    print("\n".join(lines))
    return EXIT_OK


def cmd_probe(cfg: RunConfig) -> int:
    out = _outdir(cfg)
    rep = dissipativity_probe(list(cfg.experiment.radii), cfg.grid, cfg.phys,
                              cfg.potential, cfg.solver,
                              mean=cfg.experiment.probe_mean,
                              seed=cfg.experiment.probe_seed)
    rows = []
    for pr in rep.runs:
        entry = pr.entry_time if pr.entry_time is not None else math.nan
        rows.append((pr.radius, entry, pr.terminal))
    write_csv(out / "probe.csv", "radius,entry_time,terminal_h1", rows)
    lines = [f"common ball radius estimate: {rep.common_radius:.6g}",
             f"all radii absorbed: {rep.absorbed}"]
    for pr in rep.runs:
        lines.append(f"radius {pr.radius:g}: entry at t = {pr.entry_time}, "
                     f"terminal ||phi||_1 = {pr.terminal:.6g}")
    (out / "probe_report.txt").write_text("\n".join(lines) + "\n", encoding="utf-8")
    print("\n".join(lines))
    if not rep.absorbed:
        print("warning: no absorption within t_end", file=sys.stderr)
    return EXIT_OK


def cmd_validate(cfg: RunConfig | None) -> int:
    ok = run_validation(verbose=True)
    return EXIT_OK if ok else EXIT_NUMERICAL


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="chb",
        description="Phase-separating binary fluid in a porous medium: "
                    "transport/flow solver and structure-verification experiments.")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, needs_config, help_text in [
        ("run", True, "advance the coupled system and write diagnostics"),
        ("sweep", True, "vanishing-viscosity sweep against the Darcy reference"),
        ("depend", True, "continuous-dependence experiment on paired initial data"),
        ("equilibrium", True, "long-run relaxation, stationary residual and decay fit"),
        ("probe", True, "absorbing-set probe over several initial radii"),
        ("validate", False, "run the invariant suite on small grids"),
    ]:
        p = sub.add_parser(name, help=help_text)
        if needs_config:
            p.add_argument("config", help="path to a key = value config file")
        else:
            p.add_argument("config", nargs="?", help="optional config (unused)")
    return parser


_COMMANDS = {
    "run": cmd_run,
    "sweep": cmd_sweep,
    "depend": cmd_depend,
    "equilibrium": cmd_equilibrium,
    "probe": cmd_probe,
}


def main(argv=None) -> int:
    logging.basicConfig(level=os.environ.get("CHB_LOGLEVEL", "WARNING"))
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command == "validate":
        return cmd_validate(None)
    try:
        cfg = _load_config(args.config)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        return _COMMANDS[args.command](cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (FlowSolverError, RuntimeError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
