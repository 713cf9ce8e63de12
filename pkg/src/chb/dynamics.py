"""Convective Cahn-Hilliard transport coupled to Brinkman/Darcy flow.

One step of the decoupled scheme, from phi_n:

  1.  mu_n    = -eps*Lap(phi_n) + f(phi_n)/eps
  2.  (u_n,p) = velocity solve with force = -gamma*avg(phi_n)*grad(mu_n)
  3.  phi_{n+1} solves
         [I/dt + M*eps*Lap^2 - (M*S/eps)*Lap] phi_{n+1}
            = phi_n/dt - div(avg(phi_n) u_n) + M*Lap[f(phi_n)/eps - S*phi_n/eps]

The linear solve is carried out in the equivalent increment form
  delta = Op^{-1}[ M*Lap(mu_n) - div(avg(phi_n) u_n) ],  phi_{n+1} = phi_n + delta,
which makes stationary states exact fixed points and keeps the mean drift
at rounding level.  A stabilization S >= max f'/2 over the visited range
makes the energy
  E(phi) = (eps/2)*||grad phi||^2 + <F(phi), 1>/eps
non-increasing provided the explicit convection satisfies the CFL-like
bound dt <= h/(2 max|u|); the run loop flags violations.
"""

from __future__ import annotations

import logging
import math
import os
from dataclasses import dataclass, field, replace

import numpy as np

from .grid import (
    NEUMANN,
    NOSLIP,
    PERIODIC,
    GridSpec,
    MacVector,
    ScalarField,
    average_to_faces,
    divergence,
    face_inner,
    grad_norm_sq,
    laplacian,
    norm_h1,
    norm_l2,
)
from .flow import (
    BrinkmanSolver,
    DarcySolver,
    FlowSolution,
    PeriodicFlowSolver,
    PhysParams,
    capillary_force,
)
from .io import write_mac, write_scalar
from .potential import Potential
from .spectral import HelmholtzOperator

log = logging.getLogger(__name__)

BLOWUP_THRESHOLD = 10.0  # |phi| beyond this signals instability, not physics


class BlowUpError(RuntimeError):
    def __init__(self, step: int, t: float):
        super().__init__(f"blow-up detected at step {step} (t = {t:g})")
        self.step = step
        self.t = t


@dataclass
class SolverConfig:
    """Time-stepping controls."""

    dt: float = 1e-3
    t_end: float = 1.0
    stab: float | None = None  # None: derived from the potential, see Stepper
    bc: str = NEUMANN
    flow_tol: float = 1e-10
    flow_max_iters: int = 10000
    cadence: int = 1
    snapshot_every: int = 0
    outdir: str | None = None

    def __post_init__(self):
        if not (self.dt > 0 and math.isfinite(self.dt)):
            raise ValueError(f"dt must be positive, got {self.dt}")
        if self.t_end < 0:
            raise ValueError(f"t_end must be >= 0, got {self.t_end}")
        if self.cadence < 1:
            raise ValueError("cadence must be >= 1")


@dataclass
class SimState:
    phi: ScalarField
    u: MacVector
    p: ScalarField
    t: float = 0.0
    step: int = 0

    @classmethod
    def initial(cls, phi0: ScalarField) -> "SimState":
        ubc = PERIODIC if phi0.bc == PERIODIC else NOSLIP
        return cls(phi=phi0.copy(), u=MacVector.zeros(phi0.grid, ubc),
                   p=ScalarField.zeros(phi0.grid, phi0.bc), t=0.0, step=0)


@dataclass
class DiagnosticsRecord:
    """Per-step conservation/dissipation channels, all evaluated at phi_n.

    visc_diss and darcy_diss carry their nu/eta weights.  dissipation_residual
    closes the discrete energy balance over the step ending at this record
    (zero on the first record, NaN when records are further than one step
    apart).
    """

    t: float
    mass: float
    energy: float
    grad_mu_sq: float
    visc_diss: float
    darcy_diss: float
    dissipation_residual: float
    phi_l2: float
    phi_h1: float


@dataclass
class RunResult:
    records: list
    state: SimState
    blowup_step: int | None = None
    cfl_max: float = 0.0
    cfl_violations: int = 0
    energy_identity_max: float = 0.0
    snapshots: list = field(default_factory=list)


def chemical_potential(phi: ScalarField, pot: Potential, eps: float = 1.0) -> ScalarField:
    """mu = -eps*Lap(phi) + f(phi)/eps; inherits the Neumann/periodic bc."""
    lap = laplacian(phi)
    return ScalarField(phi.grid, -eps * lap.values + pot.f(phi.values) / eps, phi.bc)


def convective_divergence(phi: ScalarField, u: MacVector) -> ScalarField:
    """Conservative transport term div(avg(phi) * u).

    With zero normal boundary flux (no-penetration or periodic u) the cell
    sum vanishes identically, so the mean of phi is untouched.
    """
    if phi.grid != u.grid:
        raise ValueError("phi and u live on different grids")
    if (phi.bc == PERIODIC) != (u.bc == PERIODIC):
        raise ValueError("mixed periodic/bounded transport")
    avg = average_to_faces(phi)
    flux = MacVector(phi.grid, avg.ux * u.ux, avg.uy * u.uy, u.bc)
    return divergence(flux)


def energy(phi: ScalarField, pot: Potential, eps: float = 1.0) -> float:
    """E = (eps/2)*||grad phi||^2 + <F(phi), 1>/eps."""
    bulk = float(pot.F(phi.values).sum()) * phi.grid.cell_area
    return 0.5 * eps * grad_norm_sq(phi) + bulk / eps


class Stepper:
    """Holds the factorized implicit operator and the flow solver for a run."""

    def __init__(self, grid: GridSpec, params: PhysParams, pot: Potential,
                 cfg: SolverConfig, phi_range: tuple[float, float] = (-1.2, 1.2)):
        self.grid = grid
        self.params = params
        self.pot = pot
        self.cfg = cfg
        if cfg.stab is not None:
            self.stab = cfg.stab
        else:
            # cover the usual invariant band [-1.2, 1.2] plus whatever the
            # initial datum already occupies
            self.stab = pot.stabilization(min(phi_range[0], -1.2), max(phi_range[1], 1.2))
        m, eps = params.mobility, params.eps
        self.op = HelmholtzOperator(
            grid, a=1.0 / cfg.dt, b=-(m * self.stab / eps), c=m * eps, bc=cfg.bc)
        if cfg.bc == PERIODIC:
            self.flow = PeriodicFlowSolver(grid, params, tol=cfg.flow_tol)
        elif params.nu > 0:
            self.flow = BrinkmanSolver(grid, params, tol=cfg.flow_tol,
                                       max_iters=cfg.flow_max_iters)
        else:
            self.flow = DarcySolver(grid, params, tol=cfg.flow_tol)

    def solve_flow(self, phi: ScalarField, mu: ScalarField) -> FlowSolution:
        force = capillary_force(phi, mu, self.params.gamma)
        return self.flow.solve(force)

    def advance(self, phi: ScalarField, u: MacVector, mu: ScalarField,
                source: ScalarField | None = None) -> ScalarField:
        """phi_{n+1} = phi_n + Op^{-1}[M*Lap(mu_n) - div(avg(phi_n) u_n) + src]."""
        m = self.params.mobility
        rhs = m * laplacian(mu).values - convective_divergence(phi, u).values
        if source is not None:
            rhs = rhs + (source.values - source.values.mean())
        delta = self.op.solve(ScalarField(self.grid, rhs, phi.bc))
        delta.values -= delta.values.mean()
        return ScalarField(phi.grid, phi.values + delta.values, phi.bc)


def _check_blowup(phi: ScalarField, step: int, t: float) -> None:
    vals = phi.values
    if not np.isfinite(vals).all() or np.abs(vals).max() > BLOWUP_THRESHOLD:
        raise BlowUpError(step, t)


def ch_step(state: SimState, params: PhysParams, pot: Potential,
            cfg: SolverConfig) -> SimState:
    """One decoupled step; the returned state carries t+dt, step+1 and the
    velocity/pressure computed from phi_n.  Mass is conserved to rounding."""
    lo = float(state.phi.values.min())
    hi = float(state.phi.values.max())
    stepper = Stepper(state.phi.grid, params, pot, cfg, phi_range=(lo, hi))
    mu = chemical_potential(state.phi, pot, params.eps)
    sol = stepper.solve_flow(state.phi, mu)
    phi_next = stepper.advance(state.phi, sol.u, mu)
    t_next = state.t + cfg.dt
    _check_blowup(phi_next, state.step + 1, t_next)
    return SimState(phi=phi_next, u=sol.u, p=sol.p, t=t_next, step=state.step + 1)


def run(phi0: ScalarField, params: PhysParams, pot: Potential, cfg: SolverConfig,
        source=None, velocity=None, on_record=None) -> RunResult:
    """Advance from phi0 until t_end, recording diagnostics every `cadence`
    steps plus a closing record at t_end.

    `velocity`: optional callable t -> MacVector replacing the flow solve
    (manufactured-solution hook).  `source`: optional callable t ->
    ScalarField added, mean-projected, to the transport equation.
    `on_record(record, phi, u)` observes emitted records without copying.

    Terminates early on blow-up, returning the diagnostics collected so far
    with `blowup_step` set.
    """
    if not phi0.is_finite():
        raise ValueError("non-finite initial datum")
    if phi0.bc != cfg.bc:
        raise ValueError(f"initial datum bc {phi0.bc!r} does not match config bc {cfg.bc!r}")
    grid = phi0.grid
    n_steps = int(round(cfg.t_end / cfg.dt))
    lo = float(phi0.values.min())
    hi = float(phi0.values.max())
    stepper = Stepper(grid, params, pot, cfg, phi_range=(lo, hi))
    state = SimState.initial(phi0)
    m, eps, gamma = params.mobility, params.eps, params.gamma
    h_min = min(grid.hx, grid.hy)

    result = RunResult(records=[], state=state)
    prev = {"energy": None, "flow_diss": 0.0, "step": -1}

    def observe(st: SimState, mu: ScalarField, sol: FlowSolution | None,
                u: MacVector, emit: bool) -> None:
        """Track the energy balance every step; build a record when emitting."""
        e = energy(st.phi, pot, eps)
        gmu = grad_norm_sq(mu)
        if sol is not None:
            visc, darcy = sol.nu_grad_u_sq, sol.eta_u_sq
        else:
            visc, darcy = 0.0, params.eta * face_inner(u, u)
        if prev["energy"] is None:
            resid = 0.0
        elif st.step - prev["step"] == 1:
            resid = (e - prev["energy"]) / cfg.dt + m * gmu + prev["flow_diss"] / gamma
        else:
            resid = float("nan")
        prev.update(energy=e, flow_diss=visc + darcy, step=st.step)
        if emit:
            rec = DiagnosticsRecord(
                t=st.t, mass=st.phi.integral(), energy=e, grad_mu_sq=gmu,
                visc_diss=visc, darcy_diss=darcy, dissipation_residual=resid,
                phi_l2=norm_l2(st.phi), phi_h1=norm_h1(st.phi))
            result.records.append(rec)
            if on_record is not None:
                on_record(rec, st.phi, u)

    def snapshot(st: SimState, u: MacVector) -> None:
        if not (cfg.snapshot_every and cfg.outdir):
            return
        os.makedirs(cfg.outdir, exist_ok=True)
        ppath = os.path.join(cfg.outdir, f"phi_{st.step:08d}.chbf")
        upath = os.path.join(cfg.outdir, f"u_{st.step:08d}.chbf")
        write_scalar(ppath, st.phi)
        write_mac(upath, u)
        result.snapshots.extend([ppath, upath])

    for n in range(n_steps):
        mu = chemical_potential(state.phi, pot, eps)
        if velocity is None:
            sol = stepper.solve_flow(state.phi, mu)
            u = sol.u
            denom = sol.force_norm * math.sqrt(max(sol.u_sq, 0.0))
            if denom > 0.0:
                result.energy_identity_max = max(
                    result.energy_identity_max, sol.energy_identity_error / denom)
        else:
            sol = None
            u = velocity(state.t)

        cfl = 2.0 * cfg.dt * u.max_abs() / h_min
        result.cfl_max = max(result.cfl_max, cfl)
        if cfl > 1.0:
            if result.cfl_violations == 0:
                log.warning("convective CFL bound exceeded at step %d "
                            "(2 dt max|u| / h = %.3g); energy decrease is "
                            "no longer guaranteed", n, cfl)
            result.cfl_violations += 1

        observe(state, mu, sol, u, emit=(n % cfg.cadence == 0))
        if cfg.snapshot_every and n % cfg.snapshot_every == 0:
            snapshot(state, u)

        src = source(state.t) if source is not None else None
        try:
            phi_next = stepper.advance(state.phi, u, mu, source=src)
            _check_blowup(phi_next, n + 1, (n + 1) * cfg.dt)
        except BlowUpError as exc:
            result.blowup_step = exc.step
            log.warning("%s; stopping early", exc)
            result.state = state
            return result
        state = SimState(phi=phi_next, u=u, p=(sol.p if sol is not None else state.p),
                         t=(n + 1) * cfg.dt, step=n + 1)

    # closing record at t_end with the velocity of the final field
    mu = chemical_potential(state.phi, pot, eps)
    if velocity is None:
        sol = stepper.solve_flow(state.phi, mu)
        state = replace(state, u=sol.u, p=sol.p)
        u = sol.u
    else:
        sol = None
        u = velocity(state.t)
    observe(state, mu, sol, u, emit=True)
    snapshot(state, u)
    result.state = state
    return result


def dissipation_audit(records, dt: float, mobility: float = 1.0,
                      gamma: float = 1.0) -> np.ndarray:
    """Residuals of the discrete energy balance over consecutive records.

    residual_n = (E_{n+1} - E_n)/dt + M*||grad mu||^2_{n+1}
                 + (nu*||grad u||^2_n + eta*||u||^2_n)/gamma

    Requires records one step apart.  The residual is O(dt) for the
    decoupled scheme, and the energy itself is non-increasing whenever the
    stabilization bound and the convective CFL guard hold.
    """
    if len(records) < 2:
        raise ValueError("need at least two records")
    ts = np.array([r.t for r in records])
    gaps = np.diff(ts)
    if np.any(np.abs(gaps - dt) > 1e-9 * dt + 1e-15):
        raise ValueError("non-uniform spacing: records are not one step apart")
    e = np.array([r.energy for r in records])
    gmu = np.array([r.grad_mu_sq for r in records])
    flow = np.array([r.visc_diss + r.darcy_diss for r in records])
    return (e[1:] - e[:-1]) / dt + mobility * gmu[1:] + flow[:-1] / gamma
