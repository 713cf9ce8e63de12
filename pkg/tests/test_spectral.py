import math

import numpy as np
import pytest

from chb.grid import GridSpec, ScalarField, inner, laplacian, norm_l2
from chb.spectral import (
    HelmholtzOperator,
    laplacian_eigenvalues_1d,
    norm_hminus1,
    poisson_neumann,
)

from reference import dense_helmholtz, dense_neumann_laplacian


def rand_field(grid, seed=0, bc="neumann", mean_zero=False):
    rng = np.random.default_rng(seed)
    vals = rng.standard_normal(grid.shape())
    if mean_zero:
        vals -= vals.mean()
    return ScalarField(grid, vals, bc)


def test_identity_operator_returns_rhs():
    g = GridSpec(8, 8)
    op = HelmholtzOperator(g, a=1.0)
    f = rand_field(g, 0)
    out = op.solve(f)
    assert np.allclose(out.values, f.values, rtol=1e-14, atol=1e-14)


def test_eigenvalue_table_matches_stencil():
    g = GridSpec(8, 12, 1.0, 0.7)
    lamx = laplacian_eigenvalues_1d(g.nx, g.hx, "neumann")
    X, _ = g.cell_centers()
    for k in (1, 3, 5):
        f = ScalarField(g, np.cos(np.pi * k * X / g.lx))
        got = laplacian(f).values
        assert np.allclose(got, -lamx[k] * f.values, atol=1e-11 * lamx[k])


def test_poisson_eigenmode_inversion():
    # rhs = lam * cos(pi x / lx), mean zero -> solution cos(pi x / lx);
    # oracle: apply the stencil Laplacian to the output
    g = GridSpec(16, 8, 2.0, 1.0)
    X, _ = g.cell_centers()
    lam = (2.0 / g.hx**2) * (1.0 - math.cos(math.pi * g.hx / g.lx))
    mode = np.cos(np.pi * X / g.lx)
    rhs = ScalarField(g, lam * mode)
    sol = poisson_neumann(g).solve(rhs, mean_constraint=0.0)
    assert np.allclose(sol.values, mode, atol=1e-12)
    back = laplacian(sol)
    assert np.allclose(-back.values, rhs.values, atol=1e-10 * lam)


def test_dense_oracle_poisson_8x8():
    g = GridSpec(8, 8)
    f = rand_field(g, 1, mean_zero=True)
    sol = poisson_neumann(g).solve(f, mean_constraint=0.0)
    L = dense_neumann_laplacian(8, 8, g.hx, g.hy)
    A = np.vstack([np.hstack([-L, np.ones((64, 1))]),
                   np.hstack([np.ones((1, 64)), np.zeros((1, 1))])])
    x = np.linalg.solve(A, np.concatenate([f.values.ravel(), [0.0]]))[:-1]
    assert np.allclose(sol.values.ravel(), x, rtol=1e-11, atol=1e-13)


def test_dense_oracle_helmholtz_biharmonic_8x8():
    g = GridSpec(8, 8)
    f = rand_field(g, 2, mean_zero=True)
    op = HelmholtzOperator(g, a=1.0, b=-1.0, c=1.0)
    sol = op.solve(f)
    M = dense_helmholtz(8, 8, g.hx, g.hy, 1.0, -1.0, 1.0)
    x = np.linalg.solve(M, f.values.ravel())
    rel = np.abs(sol.values.ravel() - x).max() / np.abs(x).max()
    assert rel < 1e-11


def test_apply_solve_round_trip():
    g = GridSpec(12, 10, 1.0, 1.4)
    op = HelmholtzOperator(g, a=2.0, b=0.5, c=0.25)
    x = rand_field(g, 3)
    r = op.apply(x)
    x2 = op.solve(r)
    assert norm_l2(ScalarField(g, x2.values - x.values)) <= 1e-11 * norm_l2(x)


def test_mean_constraint_exact():
    g = GridSpec(8, 8)
    f = rand_field(g, 4, mean_zero=True)
    op = HelmholtzOperator(g, a=0.0, b=-1.0, c=3.0)
    for target in (0.0, -1.25, 7.0):
        sol = op.solve(f, mean_constraint=target)
        assert sol.mean() == pytest.approx(target, abs=1e-13)


def test_singular_guards():
    g = GridSpec(8, 8)
    op = poisson_neumann(g)
    bad = ScalarField.full(g, 1.0)
    with pytest.raises(ValueError, match="singular"):
        op.solve(bad, mean_constraint=0.0)
    ok = rand_field(g, 5, mean_zero=True)
    with pytest.raises(ValueError, match="mean_constraint"):
        op.solve(ok)
    nan = ScalarField(g, np.full(g.shape(), np.nan))
    with pytest.raises(ValueError, match="non-finite"):
        HelmholtzOperator(g, a=1.0).solve(nan)


def test_vanishing_symbol_off_origin_rejected():
    g = GridSpec(8, 8)
    lam = laplacian_eigenvalues_1d(g.nx, g.hx, "neumann")
    # sigma = a - b*lam vanishes on the first mode when a = lam_1, b = 1
    with pytest.raises(ValueError, match="nonzero mode"):
        HelmholtzOperator(g, a=lam[1], b=1.0)


def test_periodic_mode_inversion():
    g = GridSpec(16, 16)
    X, _ = g.cell_centers()
    mode = np.cos(2 * np.pi * X)
    lam = (2.0 / g.hx**2) * (1.0 - math.cos(2 * math.pi * g.hx))
    op = HelmholtzOperator(g, a=0.0, b=-1.0, bc="periodic")
    sol = op.solve(ScalarField(g, lam * mode, "periodic"), mean_constraint=0.0)
    assert np.allclose(sol.values, mode, atol=1e-12)


def test_transform_orthogonality():
    import scipy.fft
    rng = np.random.default_rng(6)
    x = rng.standard_normal((12, 9))
    y = scipy.fft.idctn(scipy.fft.dctn(x, type=2, norm="ortho"), type=2, norm="ortho")
    assert np.abs(x - y).max() <= 1e-13 * np.abs(x).max()


def test_hminus1_dense_oracle_8x8():
    g = GridSpec(8, 8)
    f = rand_field(g, 7, mean_zero=True)
    got = norm_hminus1(f)
    L = dense_neumann_laplacian(8, 8, g.hx, g.hy)
    A = np.vstack([np.hstack([-L, np.ones((64, 1))]),
                   np.hstack([np.ones((1, 64)), np.zeros((1, 1))])])
    psi = np.linalg.solve(A, np.concatenate([f.values.ravel(), [0.0]]))[:-1]
    want = math.sqrt(np.dot(f.values.ravel(), psi) * g.cell_area)
    assert got == pytest.approx(want, rel=1e-11)


def test_hminus1_single_mode_value():
    # for an eigenmode, ||f||_{-1} = ||f|| / sqrt(lam)
    g = GridSpec(8, 8)
    X, _ = g.cell_centers()
    f = ScalarField(g, np.cos(np.pi * X))
    lam = (2.0 / g.hx**2) * (1.0 - math.cos(math.pi * g.hx))
    assert norm_hminus1(f) == pytest.approx(norm_l2(f) / math.sqrt(lam), rel=1e-12)


def test_hminus1_rejects_nonzero_mean():
    g = GridSpec(8, 8)
    with pytest.raises(ValueError, match="mean-zero"):
        norm_hminus1(ScalarField.full(g, 0.5))
