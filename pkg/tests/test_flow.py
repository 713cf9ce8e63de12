import math

import numpy as np
import pytest

from chb.grid import (
    GridSpec,
    MacVector,
    ScalarField,
    average_to_faces,
    divergence,
    face_inner,
    gradient_to_faces,
    mac_diff,
    norm_l2,
)
from chb.flow import (
    BrinkmanSolver,
    FlowSolverError,
    PhysParams,
    apply_vector_laplacian,
    brinkman_solve,
    capillary_force,
    darcy_solve,
    mac_grad_norm_sq,
)

from reference import ref_vector_laplacian_noslip, solve_dense_saddle


def rand_force(grid, seed=0, bc="nopenetration"):
    rng = np.random.default_rng(seed)
    f = MacVector(grid, rng.standard_normal((grid.nx + 1, grid.ny)),
                  rng.standard_normal((grid.nx, grid.ny + 1)), bc)
    return f


def test_phys_params_validation():
    with pytest.raises(ValueError):
        PhysParams(nu=-1.0)
    with pytest.raises(ValueError):
        PhysParams(nu=0.0, eta=0.0)
    with pytest.raises(ValueError):
        PhysParams(mobility=0.0)
    with pytest.raises(ValueError):
        PhysParams(eps=-0.1)
    PhysParams(nu=1.0, eta=0.0)  # pure viscous case is allowed


# ---------------------------------------------------------------------------
# capillary force
# ---------------------------------------------------------------------------

def test_capillary_force_constant_mu_is_zero():
    g = GridSpec(8, 8)
    rng = np.random.default_rng(1)
    phi = ScalarField(g, rng.standard_normal(g.shape()))
    mu = ScalarField.full(g, 2.5)
    f = capillary_force(phi, mu, gamma=1.7)
    assert np.all(f.ux == 0.0) and np.all(f.uy == 0.0)


def test_capillary_force_hand_stencil_4x4():
    # phi = x, mu = x at cell centers of the unit square: the x-face value
    # at interior face i is -gamma * (x_{i-1}+x_i)/2 * (x_i - x_{i-1})/h
    g = GridSpec(4, 4)
    X, _ = g.cell_centers()
    phi = ScalarField(g, X.copy())
    mu = ScalarField(g, X.copy())
    gamma = 2.0
    f = capillary_force(phi, mu, gamma)
    xc = (np.arange(4) + 0.5) * g.hx
    for i in range(1, 4):
        want = -gamma * 0.5 * (xc[i] + xc[i - 1]) * (xc[i] - xc[i - 1]) / g.hx
        assert f.ux[i, :] == pytest.approx(want, rel=1e-14)
    assert np.all(f.ux[0, :] == 0.0) and np.all(f.ux[-1, :] == 0.0)
    assert np.all(f.uy == 0.0)


def test_capillary_force_grid_mismatch():
    phi = ScalarField.zeros(GridSpec(8, 8))
    mu = ScalarField.zeros(GridSpec(8, 10))
    with pytest.raises(ValueError, match="grids"):
        capillary_force(phi, mu, 1.0)


def test_constant_phi_force_is_pure_gradient():
    # phi = 1: force = -gamma grad(mu); the solve absorbs it into pressure
    g = GridSpec(8, 8)
    rng = np.random.default_rng(2)
    phi = ScalarField.full(g, 1.0)
    mu = ScalarField(g, rng.standard_normal(g.shape()))
    f = capillary_force(phi, mu, gamma=1.0)
    gm = gradient_to_faces(mu)
    assert np.allclose(f.ux, -gm.ux, atol=1e-14)
    sol = brinkman_solve(f, PhysParams(nu=1.0, eta=1.0), tol=1e-10)
    assert math.sqrt(sol.u_sq) <= 1e-12


# ---------------------------------------------------------------------------
# vector Laplacian
# ---------------------------------------------------------------------------

def test_vector_laplacian_matches_loop_reference():
    g = GridSpec(6, 5, 1.0, 0.8)
    v = rand_force(g, 3, bc="noslip")
    v.zero_normal_boundary()
    got = apply_vector_laplacian(v)
    lux, luy = ref_vector_laplacian_noslip(v.ux, v.uy, g.hx, g.hy)
    assert np.allclose(got.ux, lux, atol=1e-12)
    assert np.allclose(got.uy, luy, atol=1e-12)


def test_grad_norm_is_positive_quadratic_form():
    g = GridSpec(6, 6)
    v = rand_force(g, 4, bc="noslip")
    v.zero_normal_boundary()
    q = mac_grad_norm_sq(v)
    assert q > 0
    # scaling: quadratic
    v2 = MacVector(g, 2 * v.ux, 2 * v.uy, "noslip")
    assert mac_grad_norm_sq(v2) == pytest.approx(4 * q, rel=1e-12)


# ---------------------------------------------------------------------------
# Brinkman solve
# ---------------------------------------------------------------------------

def test_brinkman_zero_force():
    g = GridSpec(8, 8)
    sol = brinkman_solve(MacVector.zeros(g, "nopenetration"), PhysParams())
    assert sol.u_sq == 0.0
    assert norm_l2(sol.p) == 0.0


def test_brinkman_gradient_force_annihilated():
    g = GridSpec(8, 8)
    rng = np.random.default_rng(5)
    scal = ScalarField(g, rng.standard_normal(g.shape()))
    f = gradient_to_faces(scal)
    sol = brinkman_solve(f, PhysParams(nu=0.5, eta=1.0), tol=1e-10)
    assert math.sqrt(sol.u_sq) <= 1e-12
    want = scal.values - scal.values.mean()
    assert np.allclose(sol.p.values, want, atol=1e-12)


def test_brinkman_dense_oracle_8x8():
    g = GridSpec(8, 8)
    f = rand_force(g, 6)
    f.zero_normal_boundary()
    params = PhysParams(nu=0.7, eta=1.3)
    sol = brinkman_solve(f, params, tol=1e-12)
    ux, uy, p = solve_dense_saddle(8, 8, g.hx, g.hy, params.nu, params.eta,
                                   f.ux, f.uy)
    scale = max(np.abs(ux).max(), np.abs(uy).max())
    assert np.abs(sol.u.ux - ux).max() <= 1e-10 * scale
    assert np.abs(sol.u.uy - uy).max() <= 1e-10 * scale
    assert np.abs(sol.p.values - p).max() <= 1e-10 * np.abs(p).max()


def test_brinkman_contracts_and_identity():
    g = GridSpec(16, 12, 1.0, 1.2)
    f = rand_force(g, 7)
    params = PhysParams(nu=0.2, eta=0.8)
    tol = 1e-10
    sol = brinkman_solve(f, params, tol=tol)
    assert sol.momentum_residual <= tol * (1.0 + sol.force_norm)
    assert sol.div_residual <= tol
    assert sol.energy_identity_error <= 1e-8 * sol.force_norm * math.sqrt(sol.u_sq)


def test_brinkman_no_penetration_bitwise():
    g = GridSpec(10, 10)
    sol = brinkman_solve(rand_force(g, 8), PhysParams(), tol=1e-10)
    assert np.all(sol.u.ux[0, :] == 0.0) and np.all(sol.u.ux[-1, :] == 0.0)
    assert np.all(sol.u.uy[:, 0] == 0.0) and np.all(sol.u.uy[:, -1] == 0.0)


def test_brinkman_rejects_nu_zero():
    g = GridSpec(8, 8)
    with pytest.raises(ValueError, match="darcy"):
        BrinkmanSolver(g, PhysParams(nu=0.0, eta=1.0))


def test_brinkman_periodic_single_mode():
    # solenoidal single Fourier mode: u = force / (nu |k_h|^2 + eta), p = 0
    g = GridSpec(16, 16)
    params = PhysParams(nu=0.3, eta=1.2)
    yc = (np.arange(g.ny) + 0.5) * g.hy
    ux = np.tile(np.sin(2 * np.pi * yc), (g.nx + 1, 1))
    force = MacVector(g, ux, np.zeros((g.nx, g.ny + 1)), "periodic")
    sol = brinkman_solve(force, params)
    lam = (2.0 / g.hy**2) * (1.0 - math.cos(2 * math.pi * g.hy))
    assert np.allclose(sol.u.ux, ux / (params.nu * lam + params.eta), atol=1e-14)
    assert np.abs(sol.p.values).max() <= 1e-14
    assert sol.div_residual <= 1e-12


def test_brinkman_warm_start_reuse():
    g = GridSpec(12, 12)
    params = PhysParams(nu=1.0, eta=1.0)
    solver = BrinkmanSolver(g, params, tol=1e-10)
    f = rand_force(g, 9)
    s1 = solver.solve(f)
    s2 = solver.solve(f)  # warm-started: same solution, fewer iterations
    assert np.allclose(s1.u.ux, s2.u.ux, atol=1e-12)
    assert s2.iterations <= s1.iterations


# ---------------------------------------------------------------------------
# Darcy solve
# ---------------------------------------------------------------------------

def test_darcy_zero_and_gradient_forces():
    g = GridSpec(8, 8)
    params = PhysParams(nu=0.0, eta=1.0)
    sol = darcy_solve(MacVector.zeros(g, "nopenetration"), params)
    assert sol.u_sq == 0.0
    rng = np.random.default_rng(10)
    scal = ScalarField(g, rng.standard_normal(g.shape()))
    sol2 = darcy_solve(gradient_to_faces(scal), params)
    assert math.sqrt(sol2.u_sq) <= 1e-11


def test_darcy_dense_oracle_8x8():
    g = GridSpec(8, 8)
    f = rand_force(g, 11)
    f.zero_normal_boundary()
    eta = 1.7
    sol = darcy_solve(f, PhysParams(nu=0.0, eta=eta), tol=1e-12)
    ux, uy, p = solve_dense_saddle(8, 8, g.hx, g.hy, 0.0, eta, f.ux, f.uy)
    scale = max(np.abs(ux).max(), np.abs(uy).max())
    assert np.abs(sol.u.ux - ux).max() <= 1e-10 * scale
    assert np.abs(sol.u.uy - uy).max() <= 1e-10 * scale
    assert np.abs(sol.p.values - p).max() <= 1e-10 * np.abs(p).max()


def test_darcy_divergence_free_and_identity():
    g = GridSpec(16, 16)
    f = rand_force(g, 12)
    sol = darcy_solve(f, PhysParams(nu=0.0, eta=2.0), tol=1e-10)
    assert sol.div_residual <= 1e-11
    assert sol.energy_identity_error <= 1e-8 * sol.force_norm * math.sqrt(sol.u_sq)


def test_darcy_requires_positive_eta():
    with pytest.raises(ValueError):
        PhysParams(nu=0.0, eta=0.0)


def test_darcy_is_brinkman_limit():
    g = GridSpec(12, 12)
    f = rand_force(g, 13)
    ref = darcy_solve(f, PhysParams(nu=0.0, eta=1.0), tol=1e-12)
    gaps = []
    for nu in (1e-1, 1e-2, 1e-3, 1e-4, 1e-5, 1e-6):
        s = brinkman_solve(f, PhysParams(nu=nu, eta=1.0), tol=1e-12)
        gaps.append(norm_l2(mac_diff(s.u, ref.u)))
    assert all(a > b for a, b in zip(gaps, gaps[1:])), gaps


def test_periodic_darcy_limit_exact_rate():
    # in the periodic single-mode case the gap is exactly
    # |1/(nu lam + eta) - 1/eta| * ||f||; the ratio to nu is lam/eta^2 + O(nu)
    g = GridSpec(16, 16)
    eta = 1.0
    yc = (np.arange(g.ny) + 0.5) * g.hy
    ux = np.tile(np.sin(2 * np.pi * yc), (g.nx + 1, 1))
    force = MacVector(g, ux, np.zeros((g.nx, g.ny + 1)), "periodic")
    ref = darcy_solve(force, PhysParams(nu=0.0, eta=eta))
    lam = (2.0 / g.hy**2) * (1.0 - math.cos(2 * math.pi * g.hy))
    for nu in (1e-3, 1e-5):
        s = brinkman_solve(force, PhysParams(nu=nu, eta=eta))
        gap = norm_l2(mac_diff(s.u, ref.u))
        want = abs(1.0 / (nu * lam + eta) - 1.0 / eta) * norm_l2(force)
        assert gap == pytest.approx(want, rel=1e-10)


def test_force_form_equivalence():
    # -gamma avg(phi) grad(mu) vs +gamma avg(mu) grad(phi): the two differ
    # by the exact discrete gradient of phi*mu, so the velocities agree
    g = GridSpec(10, 10)
    rng = np.random.default_rng(14)
    phi = ScalarField(g, rng.standard_normal(g.shape()))
    mu = ScalarField(g, rng.standard_normal(g.shape()))
    gamma = 1.3
    f1 = capillary_force(phi, mu, gamma)
    am, gp = average_to_faces(mu), gradient_to_faces(phi)
    f2 = MacVector(g, gamma * am.ux * gp.ux, gamma * am.uy * gp.uy, f1.bc)
    # product-rule identity: f2 - f1 = gamma * grad(phi * mu), exactly
    prod = ScalarField(g, phi.values * mu.values)
    gprod = gradient_to_faces(prod)
    assert np.allclose(f2.ux - f1.ux, gamma * gprod.ux, atol=1e-12)
    params = PhysParams(nu=0.4, eta=1.0)
    s1 = brinkman_solve(f1, params, tol=1e-12)
    s2 = brinkman_solve(f2, params, tol=1e-12)
    gap = norm_l2(mac_diff(s1.u, s2.u))
    assert gap <= 1e-10 * (math.sqrt(s1.u_sq) + 1e-30)


def test_energy_identity_under_snap():
    # a 1D (y-invariant) capillary force is an exact discrete gradient:
    # the solver returns u = 0 bitwise and the identity holds as 0 <= 0
    g = GridSpec(16, 16)
    _, Y = g.cell_centers()
    phi = ScalarField(g, np.tanh((Y - 0.5) / 0.2))
    from chb.dynamics import chemical_potential
    from chb.potential import Potential
    mu = chemical_potential(phi, Potential.quartic(), 0.2)
    f = capillary_force(phi, mu, 1.0)
    for sol in (brinkman_solve(f, PhysParams(nu=1.0, eta=1.0), tol=1e-10),
                darcy_solve(f, PhysParams(nu=0.0, eta=1.0), tol=1e-10)):
        assert sol.u_sq == 0.0
        assert sol.energy_identity_error == 0.0
        assert sol.momentum_residual <= 1e-10 * (1.0 + sol.force_norm)


def test_non_finite_force_rejected():
    g = GridSpec(8, 8)
    f = MacVector.zeros(g, "nopenetration")
    f.ux[2, 2] = np.nan
    with pytest.raises(FlowSolverError, match="non-finite"):
        brinkman_solve(f, PhysParams())
    with pytest.raises(FlowSolverError, match="non-finite"):
        darcy_solve(f, PhysParams(nu=0.0, eta=1.0))
