"""Velocity solvers for the porous-medium momentum balance.

Brinkman (nu > 0):  -nu*Lap(u) + eta*u + grad(p) = force,  div(u) = 0,
with no-slip walls (normal faces pinned to zero, tangential trace zeroed
through sign-flipped ghost mirroring).  Solved by eliminating the exactly
invertible velocity operator (sine-transform diagonal per component) and
running preconditioned conjugate gradients on the pressure Schur
complement; the preconditioner combines the identity and the inverse
Neumann Laplacian, which keeps the iteration count flat as nu -> 0.

Darcy (nu = 0):  eta*u + grad(p) = force, div(u) = 0, u.n = 0, solved
directly by one Neumann pressure Poisson solve (a Helmholtz projection).

Both solvers first split off the gradient part of the force.  If the
remaining solenoidal part is below the residual tolerance the velocity is
returned as exactly zero with the potential as pressure; gradient forces
are absorbed by the pressure and must not excite spurious flow.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.fft

from .grid import (
    NEUMANN,
    NOPENETRATION,
    NOSLIP,
    PERIODIC,
    GridSpec,
    MacVector,
    ScalarField,
    divergence,
    face_inner,
    gradient_to_faces,
    average_to_faces,
    inner,
    norm_l2,
    subtract_mean,
)
from .spectral import HelmholtzOperator, laplacian_eigenvalues_1d, poisson_neumann

__all__ = [
    "PhysParams",
    "FlowSolution",
    "FlowSolverError",
    "capillary_force",
    "brinkman_solve",
    "darcy_solve",
    "BrinkmanSolver",
    "DarcySolver",
    "apply_vector_laplacian",
    "mac_grad_norm_sq",
    "mac_norm_h1",
]


@dataclass(frozen=True)
class PhysParams:
    """Viscosity, permeability, mobility, interface width, surface tension."""

    nu: float = 1.0
    eta: float = 1.0
    mobility: float = 1.0
    eps: float = 1.0
    gamma: float = 1.0

    def __post_init__(self):
        if self.nu < 0:
            raise ValueError(f"nu must be >= 0, got {self.nu}")
        if self.eta < 0:
            raise ValueError(f"eta must be >= 0, got {self.eta}")
        if self.nu + self.eta <= 0:
            raise ValueError("momentum balance is degenerate: nu + eta must be > 0")
        if self.nu == 0 and self.eta <= 0:
            raise ValueError("the nu = 0 limit requires eta > 0")
        if self.mobility <= 0:
            raise ValueError(f"mobility must be > 0, got {self.mobility}")
        if self.eps <= 0:
            raise ValueError(f"eps must be > 0, got {self.eps}")
        if self.gamma <= 0:
            raise ValueError(f"gamma must be > 0, got {self.gamma}")


@dataclass
class FlowSolution:
    """Velocity/pressure pair with solver diagnostics.

    grad_u_sq is the Dirichlet energy <-Lap u, u> consistent with the
    solver's stencil, so nu*grad_u_sq + eta*u_sq = work holds to solver
    accuracy (the discrete velocity energy identity).
    """

    u: MacVector
    p: ScalarField
    momentum_residual: float
    div_residual: float
    iterations: int
    grad_u_sq: float
    u_sq: float
    work: float
    force_norm: float = 0.0
    # weighted dissipation channels, stored so records need not carry params
    nu_grad_u_sq: float = 0.0
    eta_u_sq: float = 0.0

    @property
    def energy_identity_error(self) -> float:
        """|nu*||grad u||^2 + eta*||u||^2 - <force, u>|."""
        return abs(self.nu_grad_u_sq + self.eta_u_sq - self.work)


class FlowSolverError(RuntimeError):
    def __init__(self, message, best_residual=None):
        super().__init__(message)
        self.best_residual = best_residual


def capillary_force(phi: ScalarField, mu: ScalarField, gamma: float) -> MacVector:
    """Face-centered surface-tension body force -gamma * avg(phi) * grad(mu).

    phi is averaged onto faces with the two-cell arithmetic mean.  Normal
    boundary faces vanish because d(mu)/dn = 0 there.
    """
    if phi.grid != mu.grid:
        raise ValueError("phi and mu live on different grids")
    if phi.bc != mu.bc:
        raise ValueError("phi and mu carry different boundary conditions")
    avg = average_to_faces(phi)
    gm = gradient_to_faces(mu)
    return MacVector(phi.grid, -gamma * avg.ux * gm.ux, -gamma * avg.uy * gm.uy, gm.bc)


# ---------------------------------------------------------------------------
# vector Laplacian on the MAC grid
# ---------------------------------------------------------------------------

def _lap_ux_noslip(ux: np.ndarray, hx: float, hy: float) -> np.ndarray:
    """5-point Laplacian of the x component; walls: value 0 at the normal
    boundary (faces on the wall), sign-flip ghosts tangentially."""
    out = np.zeros_like(ux)
    core = ux[1:-1, :]
    out[1:-1, :] = (ux[2:, :] - 2.0 * core + ux[:-2, :]) / hx**2
    d2y = np.empty_like(core)
    d2y[:, 1:-1] = core[:, 2:] - 2.0 * core[:, 1:-1] + core[:, :-2]
    d2y[:, 0] = core[:, 1] - 3.0 * core[:, 0]
    d2y[:, -1] = core[:, -2] - 3.0 * core[:, -1]
    out[1:-1, :] += d2y / hy**2
    return out


def _lap_uy_noslip(uy: np.ndarray, hx: float, hy: float) -> np.ndarray:
    out = np.zeros_like(uy)
    core = uy[:, 1:-1]
    out[:, 1:-1] = (uy[:, 2:] - 2.0 * core + uy[:, :-2]) / hy**2
    d2x = np.empty_like(core)
    d2x[1:-1, :] = core[2:, :] - 2.0 * core[1:-1, :] + core[:-2, :]
    d2x[0, :] = core[1, :] - 3.0 * core[0, :]
    d2x[-1, :] = core[-2, :] - 3.0 * core[-1, :]
    out[:, 1:-1] += d2x / hx**2
    return out


def _lap_periodic(a: np.ndarray, hx: float, hy: float) -> np.ndarray:
    return ((np.roll(a, -1, axis=0) - 2.0 * a + np.roll(a, 1, axis=0)) / hx**2
            + (np.roll(a, -1, axis=1) - 2.0 * a + np.roll(a, 1, axis=1)) / hy**2)


def apply_vector_laplacian(v: MacVector) -> MacVector:
    """Componentwise Laplacian respecting the vector boundary condition.

    For no-slip the normal boundary faces are constraint rows (u = 0) and
    the output is zero there.
    """
    g = v.grid
    if v.bc == PERIODIC:
        lx = _lap_periodic(v.ux[:-1, :], g.hx, g.hy)
        ly = _lap_periodic(v.uy[:, :-1], g.hx, g.hy)
        ux = np.empty_like(v.ux)
        uy = np.empty_like(v.uy)
        ux[:-1, :] = lx
        ux[-1, :] = lx[0, :]
        uy[:, :-1] = ly
        uy[:, -1] = ly[:, 0]
        return MacVector(g, ux, uy, PERIODIC)
    if v.bc == NOSLIP:
        return MacVector(g, _lap_ux_noslip(v.ux, g.hx, g.hy),
                         _lap_uy_noslip(v.uy, g.hx, g.hy), NOSLIP)
    raise ValueError(f"vector Laplacian undefined for bc {v.bc!r}")


def mac_grad_norm_sq(v: MacVector) -> float:
    """Dirichlet energy ||grad u||^2 = <-Lap u, u> of a no-slip or periodic field."""
    lap = apply_vector_laplacian(v)
    return max(-face_inner(lap, v), 0.0)


def mac_norm_h1(v: MacVector) -> float:
    return math.sqrt(max(face_inner(v, v), 0.0) + mac_grad_norm_sq(v))


# ---------------------------------------------------------------------------
# solvers
# ---------------------------------------------------------------------------

def _zero_normal_boundary_copy(force: MacVector) -> MacVector:
    f = force.copy()
    if f.bc != PERIODIC:
        f.zero_normal_boundary()
    return f


def _split_gradient_part(force: MacVector, poisson: HelmholtzOperator):
    """force = grad(q) + f_sol with q the mean-zero potential of div(force)."""
    rhs = divergence(force)
    rhs.values -= rhs.values.mean()  # telescoping zero up to rounding
    q = poisson.solve(rhs, mean_constraint=0.0)
    gq = gradient_to_faces(q)
    f_sol = MacVector(force.grid, force.ux - gq.ux, force.uy - gq.uy, force.bc)
    return q, f_sol


class _ComponentHelmholtz:
    """Exact inverse of (-nu*Lap + eta) per velocity component, no-slip walls.

    Interior x faces are Dirichlet nodes along x (type-I sine modes) and
    half-cell mirrored along y (type-II sine modes); the roles swap for the
    y component.  Both transforms diagonalize the stencil exactly.
    """

    def __init__(self, grid: GridSpec, nu: float, eta: float):
        self.grid = grid
        lam_x_nodes = _dirichlet_node_eigenvalues(grid.nx, grid.hx)
        lam_y_cells = _dirichlet_halfcell_eigenvalues(grid.ny, grid.hy)
        lam_y_nodes = _dirichlet_node_eigenvalues(grid.ny, grid.hy)
        lam_x_cells = _dirichlet_halfcell_eigenvalues(grid.nx, grid.hx)
        self.diag_ux = nu * (lam_x_nodes[:, None] + lam_y_cells[None, :]) + eta
        self.diag_uy = nu * (lam_x_cells[:, None] + lam_y_nodes[None, :]) + eta

    def solve(self, rhs: MacVector) -> MacVector:
        g = self.grid
        rx = rhs.ux[1:-1, :]
        t = scipy.fft.dst(rx, type=1, axis=0, norm="ortho")
        t = scipy.fft.dst(t, type=2, axis=1, norm="ortho")
        t /= self.diag_ux
        t = scipy.fft.idst(t, type=2, axis=1, norm="ortho")
        sx = scipy.fft.idst(t, type=1, axis=0, norm="ortho")

        ry = rhs.uy[:, 1:-1]
        t = scipy.fft.dst(ry, type=2, axis=0, norm="ortho")
        t = scipy.fft.dst(t, type=1, axis=1, norm="ortho")
        t /= self.diag_uy
        t = scipy.fft.idst(t, type=1, axis=1, norm="ortho")
        sy = scipy.fft.idst(t, type=2, axis=0, norm="ortho")

        ux = np.zeros((g.nx + 1, g.ny))
        uy = np.zeros((g.nx, g.ny + 1))
        ux[1:-1, :] = sx
        uy[:, 1:-1] = sy
        return MacVector(g, ux, uy, NOSLIP)


def _dirichlet_node_eigenvalues(n: int, h: float) -> np.ndarray:
    k = np.arange(1, n)
    return (2.0 / h**2) * (1.0 - np.cos(np.pi * k / n))


def _dirichlet_halfcell_eigenvalues(n: int, h: float) -> np.ndarray:
    k = np.arange(1, n + 1)
    return (2.0 / h**2) * (1.0 - np.cos(np.pi * k / n))


class BrinkmanSolver:
    """Pressure Schur-complement CG for the no-slip Brinkman problem.

    Reusable across time steps: the transform tables depend only on the
    grid and (nu, eta), and the previous pressure warm-starts the next
    solve.
    """

    def __init__(self, grid: GridSpec, params: PhysParams, tol: float = 1e-10,
                 max_iters: int = 10000):
        if params.nu <= 0:
            raise ValueError("use darcy_solve for nu = 0")
        self.grid = grid
        self.nu = params.nu
        self.eta = params.eta
        self.tol = tol
        self.max_iters = max_iters
        self.poisson = HelmholtzOperator(grid, a=0.0, b=1.0, bc=NEUMANN)  # Lap
        self.inv_neumann = poisson_neumann(grid)  # (-Lap)^{-1} for the preconditioner
        self.helmholtz = _ComponentHelmholtz(grid, params.nu, params.eta)
        self._warm_p: ScalarField | None = None

    # Schur complement action: p -> -div (A^{-1} grad p), SPD on mean-zero p
    def _schur(self, p: ScalarField) -> ScalarField:
        v = self.helmholtz.solve(gradient_to_faces(p))
        out = divergence(v)
        out.values *= -1.0
        return out

    def _precondition(self, r: ScalarField) -> ScalarField:
        z = self.inv_neumann.solve(subtract_mean(r), mean_constraint=0.0)
        z.values = self.nu * r.values + self.eta * z.values
        z.values -= z.values.mean()
        return z

    def _apply_momentum(self, u: MacVector) -> MacVector:
        lap = apply_vector_laplacian(u)
        return MacVector(self.grid, -self.nu * lap.ux + self.eta * u.ux,
                         -self.nu * lap.uy + self.eta * u.uy, NOSLIP)

    def solve(self, force: MacVector, warm_start: bool = True) -> FlowSolution:
        if not force.is_finite():
            raise FlowSolverError("non-finite force")
        f0 = _zero_normal_boundary_copy(force)
        f0.bc = NOSLIP
        force_norm = norm_l2(f0)
        q, f_sol = _split_gradient_part(f0, self.poisson)
        fs_norm = norm_l2(f_sol)
        allowance = self.tol * (1.0 + force_norm)

        if fs_norm <= allowance:
            # gradient-dominated force: pressure absorbs it, u = 0 exactly
            u = MacVector.zeros(self.grid, NOSLIP)
            return self._finish(u, q, f0, iterations=0)

        b = divergence(self.helmholtz.solve(f_sol))
        b.values *= -1.0
        b.values -= b.values.mean()
        rhs_norm = norm_l2(b)

        p = self._warm_p if (warm_start and self._warm_p is not None) else ScalarField.zeros(self.grid)
        floor = 60 * np.finfo(float).eps * rhs_norm
        cg_tol = min(self.tol, max(1e-3 * self.tol * (1.0 + fs_norm), floor))

        p, iters = self._cg(p, b, cg_tol)
        u = self.helmholtz.solve(
            MacVector(self.grid, f_sol.ux - gradient_to_faces(p).ux,
                      f_sol.uy - gradient_to_faces(p).uy, NOSLIP))
        sol = self._finish(u, _add_fields(q, p), f0, iterations=iters)

        # tighten if the energy identity is CG-limited (stays well inside
        # the 1e-8 relative contract)
        budget = 3
        while (sol.energy_identity_error > 1e-9 * force_norm * math.sqrt(sol.u_sq) + 1e-300
               and cg_tol > floor and budget > 0):
            cg_tol = max(cg_tol / 100.0, floor)
            p, more = self._cg(p, b, cg_tol)
            iters += more
            u = self.helmholtz.solve(
                MacVector(self.grid, f_sol.ux - gradient_to_faces(p).ux,
                          f_sol.uy - gradient_to_faces(p).uy, NOSLIP))
            sol = self._finish(u, _add_fields(q, p), f0, iterations=iters)
            budget -= 1

        self._warm_p = p.copy()
        return sol

    def _cg(self, x: ScalarField, b: ScalarField, tol: float):
        r = ScalarField(self.grid, b.values - self._schur(x).values)
        iters = 0
        if norm_l2(r) <= tol:
            return x.copy(), iters
        z = self._precondition(r)
        d = z.copy()
        rz = inner(r, z)
        x = x.copy()
        for _ in range(self.max_iters):
            sd = self._schur(d)
            alpha = rz / inner(d, sd)
            x.values += alpha * d.values
            r.values -= alpha * sd.values
            iters += 1
            if norm_l2(r) <= tol:
                return x, iters
            z = self._precondition(r)
            rz_new = inner(r, z)
            d.values = z.values + (rz_new / rz) * d.values
            rz = rz_new
        raise FlowSolverError(
            f"Brinkman pressure iteration did not reach {tol:g} within "
            f"{self.max_iters} steps", best_residual=norm_l2(r))

    def _finish(self, u: MacVector, p: ScalarField, f0: MacVector, iterations: int) -> FlowSolution:
        p = subtract_mean(p)
        res = self._apply_momentum(u)
        gp = gradient_to_faces(p)
        res.ux += gp.ux - f0.ux
        res.uy += gp.uy - f0.uy
        res.ux[0, :] = res.ux[-1, :] = 0.0  # constraint rows
        res.uy[:, 0] = res.uy[:, -1] = 0.0
        grad_sq = mac_grad_norm_sq(u)
        u_sq = face_inner(u, u)
        work = face_inner(f0, u)
        return FlowSolution(
            u=u, p=p,
            momentum_residual=norm_l2(res),
            div_residual=norm_l2(divergence(u)),
            iterations=iterations,
            grad_u_sq=grad_sq, u_sq=u_sq, work=work, force_norm=norm_l2(f0),
            nu_grad_u_sq=self.nu * grad_sq, eta_u_sq=self.eta * u_sq)


class DarcySolver:
    """Helmholtz projection for eta*u + grad(p) = force, u.n = 0."""

    def __init__(self, grid: GridSpec, params: PhysParams, tol: float = 1e-10):
        if params.eta <= 0:
            raise ValueError("Darcy flow requires eta > 0")
        if params.nu != 0:
            raise ValueError("Darcy solver expects nu = 0; use brinkman_solve")
        self.grid = grid
        self.eta = params.eta
        self.tol = tol
        self.poisson = HelmholtzOperator(grid, a=0.0, b=1.0, bc=NEUMANN)

    def solve(self, force: MacVector) -> FlowSolution:
        if not force.is_finite():
            raise FlowSolverError("non-finite force")
        f0 = _zero_normal_boundary_copy(force)
        f0.bc = NOPENETRATION
        force_norm = norm_l2(f0)
        q, f_sol = _split_gradient_part(f0, self.poisson)
        fs_norm = norm_l2(f_sol)
        if fs_norm <= self.tol * (1.0 + force_norm):
            u = MacVector.zeros(self.grid, NOPENETRATION)
        else:
            u = MacVector(self.grid, f_sol.ux / self.eta, f_sol.uy / self.eta,
                          NOPENETRATION)
        p = subtract_mean(q)
        gp = gradient_to_faces(p)
        res = MacVector(self.grid, self.eta * u.ux + gp.ux - f0.ux,
                        self.eta * u.uy + gp.uy - f0.uy, NOPENETRATION)
        u_sq = face_inner(u, u)
        return FlowSolution(
            u=u, p=p,
            momentum_residual=norm_l2(res),
            div_residual=norm_l2(divergence(u)),
            iterations=0,
            grad_u_sq=0.0, u_sq=u_sq, work=face_inner(f0, u), force_norm=force_norm,
            nu_grad_u_sq=0.0, eta_u_sq=self.eta * u_sq)


class PeriodicFlowSolver:
    """Exact Fourier solve of the periodic Brinkman/Darcy problem.

    Used for spectral-exactness testing: every mode decouples, so the
    velocity is the divergence-free projection of the force scaled by
    1/(nu*|k_h|^2 + eta).  The zero mode (net flow) is force_mean/eta.
    """

    def __init__(self, grid: GridSpec, params: PhysParams, tol: float = 1e-10):
        if params.nu == 0 and params.eta <= 0:
            raise ValueError("degenerate momentum balance")
        self.grid = grid
        self.nu = params.nu
        self.eta = params.eta
        self.tol = tol
        self.gx = (1.0 - np.exp(-2j * np.pi * np.arange(grid.nx) / grid.nx)) / grid.hx
        self.gy = (1.0 - np.exp(-2j * np.pi * np.arange(grid.ny) / grid.ny)) / grid.hy
        lamx = laplacian_eigenvalues_1d(grid.nx, grid.hx, PERIODIC)
        lamy = laplacian_eigenvalues_1d(grid.ny, grid.hy, PERIODIC)
        self.lam = lamx[:, None] + lamy[None, :]

    def solve(self, force: MacVector) -> FlowSolution:
        if not force.is_finite():
            raise FlowSolverError("non-finite force")
        g = self.grid
        fx = scipy.fft.fft2(force.ux[:-1, :])
        fy = scipy.fft.fft2(force.uy[:, :-1])
        gx = self.gx[:, None]
        gy = self.gy[None, :]
        lam = self.lam
        denom_p = lam.copy()
        denom_p[0, 0] = 1.0
        # momentum with div-free constraint: p_hat = -(dx*fx + dy*fy)/lam,
        # where the divergence symbol is d = -conj(g)
        div_f = -(np.conj(gx) * fx + np.conj(gy) * fy)
        p_hat = -div_f / denom_p
        p_hat[0, 0] = 0.0
        scale = self.nu * lam + self.eta
        if self.eta == 0:
            scale[0, 0] = 1.0  # zero force mode assumed; checked below
        ux_hat = (fx - gx * p_hat) / scale
        uy_hat = (fy - gy * p_hat) / scale
        if self.eta == 0:
            ux_hat[0, 0] = 0.0
            uy_hat[0, 0] = 0.0
        ux = scipy.fft.ifft2(ux_hat).real
        uy = scipy.fft.ifft2(uy_hat).real
        u = MacVector(g, np.vstack([ux, ux[:1, :]]),
                      np.hstack([uy, uy[:, :1]]), PERIODIC)
        p = ScalarField(g, scipy.fft.ifft2(p_hat).real, PERIODIC)
        p.values -= p.values.mean()
        lap = apply_vector_laplacian(u)
        res = MacVector(g, -self.nu * lap.ux + self.eta * u.ux, -self.nu * lap.uy + self.eta * u.uy, PERIODIC)
        gp = gradient_to_faces(p)
        res.ux += gp.ux - force.ux
        res.uy += gp.uy - force.uy
        grad_sq = mac_grad_norm_sq(u)
        u_sq = face_inner(u, u)
        return FlowSolution(
            u=u, p=p,
            momentum_residual=norm_l2(res),
            div_residual=norm_l2(divergence(u)),
            iterations=0,
            grad_u_sq=grad_sq, u_sq=u_sq, work=face_inner(force, u),
            force_norm=norm_l2(force),
            nu_grad_u_sq=self.nu * grad_sq, eta_u_sq=self.eta * u_sq)


def _add_fields(a: ScalarField, b: ScalarField) -> ScalarField:
    return ScalarField(a.grid, a.values + b.values, a.bc)


def brinkman_solve(force: MacVector, params: PhysParams, tol: float = 1e-10,
                   max_iters: int = 10000) -> FlowSolution:
    """One-shot Brinkman solve; see BrinkmanSolver for the reusable form."""
    if force.bc == PERIODIC:
        return PeriodicFlowSolver(force.grid, params, tol).solve(force)
    return BrinkmanSolver(force.grid, params, tol, max_iters).solve(force)


def darcy_solve(force: MacVector, params: PhysParams, tol: float = 1e-10) -> FlowSolution:
    if force.bc == PERIODIC:
        return PeriodicFlowSolver(force.grid, params, tol).solve(force)
    return DarcySolver(force.grid, params, tol).solve(force)
