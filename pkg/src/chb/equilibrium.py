"""Stationary states of the phase field and decay-rate estimation.

A stationary state solves -eps*Lap(z) + f(z)/eps = const with d(z)/dn = 0
and prescribed mean.  It is computed by running the mass-conserving
gradient flow (the transport dynamics with the velocity switched off)
with large stabilized steps until the projected chemical potential is
flat.

The late-time approach of a trajectory to its limit is fitted against the
algebraic law  c / (1+t)^e  with e = theta/(1-2*theta); near a
nondegenerate minimum the decay is exponential instead, so an exponential
model is fitted alongside and the better one reported.  The algebraic law
is a one-sided bound, never asserted sharp.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .dynamics import RunResult, SolverConfig, Stepper, chemical_potential, run
from .grid import MacVector, ScalarField, field_diff, norm_h1, norm_l2, subtract_mean
from .potential import Potential
from .flow import PhysParams


@dataclass
class StationaryState:
    z: ScalarField
    lagrange_const: float
    residual: float
    mean: float
    iterations: int = 0


@dataclass
class RateFit:
    """Fitted decay of ||phi(t) - phi_star||_1.

    exponent is the algebraic rate e (norm ~ c*(1+t)^-e), theta_hat the
    back-solved gradient-inequality exponent e/(1+2e) in (0, 1/2).  The
    exponential model log(norm) ~ log(c) - rate*t is fitted on the same
    window; `model` names the better fit by R^2.  Goodness is reported,
    not asserted.
    """

    theta_hat: float
    exponent: float
    prefactor: float
    window: tuple[float, float]
    goodness: float
    model: str
    exp_rate: float
    exp_goodness: float


def stationarity_residual(z: ScalarField, pot: Potential, eps: float) -> float:
    """||P0 mu(z)|| with P0 the mean projection: zero exactly at stationarity."""
    mu = chemical_potential(z, pot, eps)
    return norm_l2(subtract_mean(mu))


def solve_stationary(z0: ScalarField, pot: Potential, eps: float = 1.0,
                     tol: float = 1e-10, max_iters: int = 200000,
                     dt: float = 10.0, stab: float | None = None) -> StationaryState:
    """Drive z0 to a stationary state along the velocity-free flow.

    The mean is pinned at every inner iteration (it is conserved by the
    scheme to rounding).  Raises on iteration exhaustion, carrying the best
    residual reached.
    """
    if not z0.is_finite():
        raise ValueError("non-finite initial guess")
    target_mean = z0.mean()
    cfg = SolverConfig(dt=dt, t_end=dt, stab=stab, bc=z0.bc)
    lo, hi = float(z0.values.min()), float(z0.values.max())
    stepper = Stepper(z0.grid, PhysParams(eps=eps), pot, cfg, phi_range=(lo, hi))
    u0 = MacVector.zeros(z0.grid, "periodic" if z0.bc == "periodic" else "noslip")
    z = z0.copy()
    best = math.inf
    for it in range(max_iters):
        mu = chemical_potential(z, pot, eps)
        res = norm_l2(subtract_mean(mu))
        best = min(best, res)
        if res <= tol:
            const = float(pot.f(z.values).mean()) / eps
            return StationaryState(z=z, lagrange_const=const, residual=res,
                                   mean=z.mean(), iterations=it)
        z = stepper.advance(z, u0, mu)
        z.values += target_mean - z.values.mean()
    raise RuntimeError(
        f"stationary solve did not reach {tol:g} in {max_iters} iterations "
        f"(best residual {best:.3e})")


def _lstsq_line(x: np.ndarray, y: np.ndarray) -> tuple[float, float, float]:
    """slope, intercept, R^2 of a least-squares line."""
    A = np.vstack([x, np.ones_like(x)]).T
    coef, *_ = np.linalg.lstsq(A, y, rcond=None)
    slope, intercept = float(coef[0]), float(coef[1])
    pred = A @ coef
    ss_res = float(np.sum((y - pred) ** 2))
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0
    return slope, intercept, r2


def fit_decay(series, window: tuple[float, float] | None = None,
              floor: float = 1e-13) -> RateFit:
    """Fit the decay of a positive norm series (t_i, n_i).

    Algebraic model: log n = log c - e * log(1+t); exponential model:
    log n = log c - k * t.  Points below `floor` are skipped.  Raises on
    fewer than five usable points or on a series with no decay.
    """
    pts = [(float(t), float(v)) for t, v in series]
    if window is not None:
        lo, hi = window
        pts = [(t, v) for t, v in pts if lo <= t <= hi]
    else:
        lo = min(t for t, _ in pts) if pts else 0.0
        hi = max(t for t, _ in pts) if pts else 0.0
    pts = [(t, v) for t, v in pts if v > floor]
    if len(pts) < 5:
        raise ValueError(f"fewer than 5 usable points in window [{lo}, {hi}]")
    t = np.array([p[0] for p in pts])
    v = np.array([p[1] for p in pts])
    if v.max() <= v.min() * (1.0 + 1e-9):
        raise ValueError("no decay detected")
    logv = np.log(v)
    slope_a, icept_a, r2_a = _lstsq_line(np.log1p(t), logv)
    slope_e, _, r2_e = _lstsq_line(t, logv)
    e = -slope_a
    if e <= 0:
        raise ValueError("no decay detected")
    theta = e / (1.0 + 2.0 * e)
    model = "exponential" if r2_e > r2_a else "algebraic"
    return RateFit(theta_hat=theta, exponent=e, prefactor=float(np.exp(icept_a)),
                   window=(lo, hi), goodness=r2_a, model=model,
                   exp_rate=-slope_e, exp_goodness=r2_e)


@dataclass
class VelocityDecayReport:
    ok: bool
    prefactor: float
    exponent: float  # the u-rate e/4 implied by the phase-field fit
    max_violation: float
    final_norm: float


def velocity_decay_check(series, fit: RateFit, slack: float = 2.0,
                         final_tol: float = 1e-8) -> VelocityDecayReport:
    """Check ||u(t)|| <= c * (1+t)^(-e/4) with c fitted on the early window.

    The rate e/4 is the one implied for the velocity by the fitted
    phase-field exponent.  c is taken as the supremum of
    ||u||*(1+t)^(e/4) over the first half of the fit window; the bound is
    then verified with `slack` on the rest, together with the final norm
    dropping below `final_tol`.  Returns a report, never raises.
    """
    lo, hi = fit.window
    rate = fit.exponent / 4.0
    pts = [(float(t), float(v)) for t, v in series if lo <= t <= hi]
    if not pts:
        return VelocityDecayReport(False, 0.0, rate, math.inf, math.inf)
    mid = lo + 0.5 * (hi - lo)
    early = [v * (1.0 + t) ** rate for t, v in pts if t <= mid]
    c = max(early) if early else 0.0
    violation = 0.0
    for t, v in pts:
        bound = slack * c * (1.0 + t) ** (-rate)
        if v > bound:
            violation = max(violation, math.inf if bound == 0 else v / bound)
    final_norm = pts[-1][1]
    ok = violation == 0.0 and final_norm <= final_tol
    return VelocityDecayReport(ok=ok, prefactor=c, exponent=rate,
                               max_violation=violation, final_norm=final_norm)


@dataclass
class EquilibriumReport:
    """Long-run relaxation: the limit state, its stationarity residual, the
    fitted decay of the distance to it, and the velocity decay check."""

    result: RunResult
    phi_star: ScalarField
    residual: float
    times: np.ndarray
    distance_h1: np.ndarray      # ||phi(t) - phi_star||_1
    velocity_norm: np.ndarray    # ||u(t)||_1 (nu > 0) or ||u(t)|| (nu = 0)
    fit: RateFit | None
    fit_error: str
    velocity: VelocityDecayReport | None


def equilibrium_experiment(phi0: ScalarField, params: PhysParams, pot: Potential,
                           cfg: SolverConfig,
                           fit_window: tuple[float, float] | None = None)\
        -> EquilibriumReport:
    """Run to t_end, take the final state as the limit phi_star, and fit
    the decay of the H1 distance toward it.

    The fit window is clipped to [fit_lo, 0.9*t_end]: near t_end the
    distance to the self-defined limit collapses faster than the true
    asymptotics.  A failed fit (no decay, too few points) is reported, not
    raised.
    """
    snapshots: list[tuple[float, ScalarField]] = []

    def keep(rec, phi, u):
        snapshots.append((rec.t, phi.copy()))

    result = run(phi0, params, pot, cfg, on_record=keep)
    if result.blowup_step is not None:
        raise RuntimeError(f"equilibrium run blew up at step {result.blowup_step}")
    phi_star = result.state.phi
    residual = stationarity_residual(phi_star, pot, params.eps)

    times = np.array([t for t, _ in snapshots])
    dist = np.array([norm_h1(field_diff(phi, phi_star)) for _, phi in snapshots])
    uvals = []
    for rec in result.records:
        usq = rec.darcy_diss / params.eta if params.eta > 0 else 0.0
        if params.nu > 0:
            usq += rec.visc_diss / params.nu
        uvals.append(math.sqrt(max(usq, 0.0)))
    velocity_norm = np.array(uvals)

    if fit_window is None:
        lo = min(1.0, 0.25 * cfg.t_end)
        hi = 0.9 * cfg.t_end
    else:
        lo, hi = fit_window
        hi = min(hi, 0.9 * cfg.t_end)
    fit = None
    fit_error = ""
    vel_report = None
    try:
        fit = fit_decay(list(zip(times, dist)), window=(lo, hi))
    except ValueError as exc:
        fit_error = str(exc)
    if fit is not None:
        vel_report = velocity_decay_check(list(zip(times, velocity_norm)), fit)
    return EquilibriumReport(result=result, phi_star=phi_star, residual=residual,
                             times=times, distance_h1=dist,
                             velocity_norm=velocity_norm, fit=fit,
                             fit_error=fit_error, velocity=vel_report)
