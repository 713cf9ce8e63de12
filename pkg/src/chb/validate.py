"""Fast invariant suite behind `chb validate`: every structural property
the library promises, exercised on small grids in a few seconds.  Each
check returns (name, passed, detail); the CLI exits nonzero if any fails.
"""

from __future__ import annotations

import math

import numpy as np

from .config import InitialCondition, make_initial, parse_config, serialize
from .dynamics import (
    SolverConfig,
    chemical_potential,
    dissipation_audit,
    energy,
    run,
)
from .equilibrium import fit_decay, solve_stationary
from .experiments import continuous_dependence, smooth_noise, viscosity_sweep
from .flow import PhysParams, brinkman_solve, capillary_force, darcy_solve
from .grid import (
    GridSpec,
    MacVector,
    ScalarField,
    divergence,
    face_inner,
    gradient_to_faces,
    inner,
    laplacian,
    mac_diff,
    norm_l2,
)
from .io import diagnostics_csv_text
from .potential import Potential, growth_ratio, min_curvature
from .spectral import HelmholtzOperator, norm_hminus1


def _rand_field(grid, seed, bc="neumann"):
    rng = np.random.default_rng(seed)
    return ScalarField(grid, rng.standard_normal(grid.shape()), bc)


def _rand_divfree_ok_vector(grid, seed):
    """Random face field with zero normal boundary values."""
    rng = np.random.default_rng(seed)
    v = MacVector(grid, rng.standard_normal((grid.nx + 1, grid.ny)),
                  rng.standard_normal((grid.nx, grid.ny + 1)), "nopenetration")
    v.zero_normal_boundary()
    return v


def all_checks():
    """Yield (name, callable) pairs; each callable returns (ok, detail)."""

    g = GridSpec(12, 10, 1.0, 1.3)
    pot = Potential.quartic()

    def summation_by_parts():
        a, b = _rand_field(g, 0), _rand_field(g, 1)
        lhs = inner(ScalarField(g, -laplacian(a).values), b)
        rhs = face_inner(gradient_to_faces(a), gradient_to_faces(b))
        err = abs(lhs - rhs) / (abs(rhs) + 1e-30)
        return err < 1e-12, f"relative gap {err:.2e}"

    def composition_identity():
        f = _rand_field(g, 2)
        same = np.array_equal(laplacian(f).values,
                              divergence(gradient_to_faces(f)).values)
        return same, "bitwise" if same else "mismatch"

    def mean_annihilation():
        f = _rand_field(g, 3)
        v = _rand_divfree_ok_vector(g, 4)
        m1 = abs(laplacian(f).integral()) / (norm_l2(f) + 1e-30)
        m2 = abs(divergence(v).integral()) / (norm_l2(v) + 1e-30)
        return max(m1, m2) < 1e-12, f"means {m1:.2e}, {m2:.2e}"

    def laplacian_order():
        errs = []
        for n in (8, 16, 32):
            gr = GridSpec(n, n)
            X, Y = gr.cell_centers()
            f = ScalarField(gr, np.cos(np.pi * X) * np.cos(2 * np.pi * Y))
            exact = -(np.pi**2 + 4 * np.pi**2) * f.values
            errs.append(norm_l2(ScalarField(gr, laplacian(f).values - exact)))
        orders = [math.log2(errs[i] / errs[i + 1]) for i in range(2)]
        return min(orders) >= 1.9, f"orders {orders[0]:.2f}, {orders[1]:.2f}"

    def spectral_round_trip():
        op = HelmholtzOperator(g, a=1.0, b=-1.0, c=1.0)
        x = _rand_field(g, 5)
        r = op.apply(op.solve(op.apply(x)))
        err = norm_l2(ScalarField(g, r.values - op.apply(x).values)) / norm_l2(op.apply(x))
        return err < 1e-11, f"relative {err:.2e}"

    def spectral_mean_preservation():
        f = _rand_field(g, 6)
        f.values -= f.values.mean()
        op = HelmholtzOperator(g, a=0.0, b=-1.0, c=2.5)
        x = op.solve(f, mean_constraint=0.75)
        err = abs(x.mean() - 0.75)
        return err < 1e-13, f"|mean - target| = {err:.2e}"

    def transform_orthogonality():
        import scipy.fft
        x = np.random.default_rng(7).standard_normal(g.shape())
        y = scipy.fft.idctn(scipy.fft.dctn(x, type=2, norm="ortho"), type=2, norm="ortho")
        err = np.abs(x - y).max() / np.abs(x).max()
        return err < 1e-13, f"roundtrip {err:.2e}"

    def potential_derivative():
        s = np.linspace(-2, 2, 1000)
        worst = 0.0
        for h in (1e-4, 1e-5):
            fd = (pot.F(s + h) - pot.F(s - h)) / (2 * h)
            worst = max(worst, float(np.max(np.abs(pot.f(s) - fd) / (1 + np.abs(fd)))))
        return worst < 1e-6, f"max fd gap {worst:.2e}"

    def potential_growth():
        r = growth_ratio(pot)
        return math.isfinite(r) and r < 100, f"sup |f|/(1+|s|^3) = {r:.3g}"

    def potential_curvature_bounded():
        m = min_curvature(pot, -5, 5)
        return math.isfinite(m), f"inf f' = {m:.3g}"

    params = PhysParams(nu=0.7, eta=1.3)

    def flow_energy_identity():
        f = _rand_divfree_ok_vector(g, 8)
        sol = brinkman_solve(f, params, tol=1e-11)
        bound = 1e-8 * sol.force_norm * math.sqrt(sol.u_sq) + 1e-300
        return sol.energy_identity_error <= bound, \
            f"err {sol.energy_identity_error:.2e} vs bound {bound:.2e}"

    def flow_divergence_free():
        f = _rand_divfree_ok_vector(g, 9)
        s1 = brinkman_solve(f, params, tol=1e-11)
        s2 = darcy_solve(f, PhysParams(nu=0.0, eta=1.3), tol=1e-11)
        worst = max(s1.div_residual, s2.div_residual)
        return worst < 1e-10, f"max div {worst:.2e}"

    def flow_no_penetration_bitwise():
        f = _rand_divfree_ok_vector(g, 10)
        sol = brinkman_solve(f, params, tol=1e-11)
        u = sol.u
        ok = (np.all(u.ux[0, :] == 0.0) and np.all(u.ux[-1, :] == 0.0)
              and np.all(u.uy[:, 0] == 0.0) and np.all(u.uy[:, -1] == 0.0))
        return ok, "normal boundary faces identically zero" if ok else "leak"

    def darcy_is_brinkman_limit():
        f = _rand_divfree_ok_vector(g, 11)
        ref = darcy_solve(f, PhysParams(nu=0.0, eta=1.0), tol=1e-12)
        gaps = []
        for nu in (1e-1, 1e-2, 1e-3, 1e-4, 1e-5, 1e-6):
            s = brinkman_solve(f, PhysParams(nu=nu, eta=1.0), tol=1e-12)
            gaps.append(norm_l2(mac_diff(s.u, ref.u)))
        mono = all(gaps[i] > gaps[i + 1] for i in range(len(gaps) - 1))
        return mono, "gaps " + ", ".join(f"{x:.1e}" for x in gaps)

    def force_form_equivalence():
        # -phi grad(mu) and +mu grad(phi) differ by a discrete gradient and
        # must produce the same velocity
        phi = _rand_field(g, 12)
        mu = _rand_field(g, 13)
        from .grid import average_to_faces
        f1 = capillary_force(phi, mu, 1.0)
        am, gp = average_to_faces(mu), gradient_to_faces(phi)
        f2 = MacVector(g, am.ux * gp.ux, am.uy * gp.uy, f1.bc)
        s1 = brinkman_solve(f1, params, tol=1e-12)
        s2 = brinkman_solve(f2, params, tol=1e-12)
        gap = norm_l2(mac_diff(s1.u, s2.u)) / (math.sqrt(s1.u_sq) + 1e-30)
        return gap < 1e-9, f"velocity gap {gap:.2e}"

    run_grid = GridSpec(16, 16)
    run_params = PhysParams(nu=1.0, eta=1.0, eps=0.2)
    spin = InitialCondition(kind="spinodal", amplitude=0.05, seed=3)

    def mass_conservation_run():
        phi0 = make_initial(spin, run_grid, eps=run_params.eps)
        res = run(phi0, run_params, pot, SolverConfig(dt=1e-3, t_end=0.2))
        mass = np.array([r.mass for r in res.records])
        drift = np.abs(mass - mass[0]).max() / (1.0 + abs(mass[0]))
        return drift < 1e-12, f"relative drift {drift:.2e}"

    def energy_monotone_run():
        phi0 = make_initial(spin, run_grid, eps=run_params.eps)
        res = run(phi0, run_params, pot, SolverConfig(dt=1e-3, t_end=0.2))
        e = np.array([r.energy for r in res.records])
        ok = bool(np.all(np.diff(e) <= 1e-12)) and res.cfl_violations == 0
        return ok, f"E[0]={e[0]:.4g} E[-1]={e[-1]:.4g} cfl_max={res.cfl_max:.3g}"

    def constant_fixed_point():
        phi0 = ScalarField.full(run_grid, 0.4)
        res = run(phi0, run_params, pot, SolverConfig(dt=1e-2, t_end=0.05))
        same = np.array_equal(res.state.phi.values, phi0.values)
        return same, "bitwise" if same else "drifted"

    def audit_residual_scale():
        # a short burn-in smooths the white-noise datum: the first-step
        # damping of unresolved modes carries an O(1) quadrature error for
        # any one-step scheme, and only the resolved regime scales with dt
        aud_params = PhysParams(nu=1.0, eta=1.0, eps=0.25)
        phi0 = make_initial(spin, run_grid, eps=aud_params.eps)
        burn = run(phi0, aud_params, pot, SolverConfig(dt=1e-3, t_end=0.1))
        maxima = []
        for dt in (2e-3, 1e-3):
            res = run(burn.state.phi, aud_params, pot, SolverConfig(dt=dt, t_end=0.4))
            resid = dissipation_audit(res.records, dt)
            maxima.append(np.abs(resid).max())
        ratio = maxima[1] / maxima[0]
        return 0.3 < ratio < 0.75, f"halving ratio {ratio:.3f}"

    def boundedness_long_run():
        phi0 = make_initial(spin, run_grid, eps=run_params.eps)
        res = run(phi0, run_params, pot, SolverConfig(dt=2e-3, t_end=2.0))
        h1 = np.array([r.phi_h1 for r in res.records])
        early_max = h1[: len(h1) // 4].max()
        return h1.max() <= 2.0 * early_max + 1e-12, \
            f"sup ||phi||_1 = {h1.max():.3g} vs transient {early_max:.3g}"

    def stationary_solver():
        z0 = ScalarField.full(run_grid, 0.25)
        st = solve_stationary(z0, pot, eps=run_params.eps, tol=1e-11)
        ok = st.residual <= 1e-11 and abs(st.mean - 0.25) < 1e-12
        return ok, f"residual {st.residual:.2e}, mean {st.mean:.15g}"

    def stationary_energy_monotone():
        noise = smooth_noise(run_grid, 11)
        z0 = ScalarField(run_grid, 0.3 * noise.values)
        cfg = SolverConfig(dt=0.5, t_end=0.5)
        from .dynamics import Stepper
        stepper = Stepper(run_grid, PhysParams(eps=run_params.eps), pot, cfg)
        u0 = MacVector.zeros(run_grid)
        z = z0.copy()
        energies = [energy(z, pot, run_params.eps)]
        for _ in range(40):
            mu = chemical_potential(z, pot, run_params.eps)
            z = stepper.advance(z, u0, mu)
            energies.append(energy(z, pot, run_params.eps))
        mono = all(b <= a + 1e-12 for a, b in zip(energies, energies[1:]))
        return mono, f"E: {energies[0]:.4g} -> {energies[-1]:.4g}"

    def fit_recovers_power_law():
        t = np.linspace(0, 40, 200)
        series = list(zip(t, 3.0 * (1 + t) ** -0.5))
        fit = fit_decay(series, window=(1.0, 40.0))
        err = abs(fit.exponent - 0.5)
        return err < 1e-6, f"exponent {fit.exponent:.8f}"

    def dependence_symmetry():
        base = make_initial(spin, run_grid, eps=run_params.eps)
        pert = ScalarField(run_grid, base.values
                           + 1e-4 * smooth_noise(run_grid, 5).values)
        pert.values += base.mean() - pert.values.mean()
        cfg = SolverConfig(dt=1e-3, t_end=0.02)
        d12 = continuous_dependence(base, pert, run_params, pot, cfg)
        d21 = continuous_dependence(pert, base, run_params, pot, cfg)
        same = np.array_equal(d12.gap_sq, d21.gap_sq)
        return same, "identical gap series" if same else "asymmetric"

    def sweep_reference_invariants():
        phi0 = make_initial(spin, run_grid, eps=run_params.eps)
        sw = viscosity_sweep(phi0, [1e-1, 1e-3], PhysParams(nu=1.0, eta=1.0, eps=0.2),
                             pot, SolverConfig(dt=1e-3, t_end=0.05))
        ok = sw.monotone and all(d > 0 for d in sw.diff_sq)
        return ok, f"diff_sq {sw.diff_sq[0]:.2e} > {sw.diff_sq[1]:.2e}"

    def determinism_csv():
        phi0 = make_initial(spin, run_grid, eps=run_params.eps)
        outs = []
        for _ in range(2):
            res = run(phi0, run_params, pot, SolverConfig(dt=1e-3, t_end=0.05))
            outs.append(diagnostics_csv_text(res.records))
        return outs[0] == outs[1], "bitwise identical CSV"

    def config_round_trip():
        cfg = parse_config("phys.nu = 0.25\nic.kind = stripe\nsolver.dt = 5e-4\n")
        again = parse_config(serialize(cfg))
        return again == cfg, "parse(serialize(.)) == ."

    def hminus1_requires_mean_zero():
        f = ScalarField.full(g, 1.0)
        try:
            norm_hminus1(f)
            return False, "accepted non-mean-zero input"
        except ValueError:
            return True, "rejected non-mean-zero input"

    checks = [
        ("grid: summation by parts", summation_by_parts),
        ("grid: divergence o gradient = laplacian", composition_identity),
        ("grid: mean annihilation", mean_annihilation),
        ("grid: laplacian second order", laplacian_order),
        ("spectral: apply/solve round trip", spectral_round_trip),
        ("spectral: mean preservation", spectral_mean_preservation),
        ("spectral: transform orthogonality", transform_orthogonality),
        ("spectral: H^-1 guards mean", hminus1_requires_mean_zero),
        ("potential: f is dF/ds", potential_derivative),
        ("potential: cubic growth", potential_growth),
        ("potential: curvature bounded below", potential_curvature_bounded),
        ("flow: velocity energy identity", flow_energy_identity),
        ("flow: divergence free", flow_divergence_free),
        ("flow: no-penetration bitwise", flow_no_penetration_bitwise),
        ("flow: Darcy is the Brinkman limit", darcy_is_brinkman_limit),
        ("flow: force forms agree", force_form_equivalence),
        ("transport: mass conservation", mass_conservation_run),
        ("transport: energy non-increasing", energy_monotone_run),
        ("transport: constants are fixed points", constant_fixed_point),
        ("transport: audit residual is O(dt)", audit_residual_scale),
        ("transport: trajectories stay bounded", boundedness_long_run),
        ("equilibrium: stationary solve", stationary_solver),
        ("equilibrium: gradient flow dissipates", stationary_energy_monotone),
        ("equilibrium: rate fit on exact power law", fit_recovers_power_law),
        ("experiments: dependence gap is symmetric", dependence_symmetry),
        ("experiments: sweep reference behaves", sweep_reference_invariants),
        ("experiments: deterministic diagnostics", determinism_csv),
        ("cli: config round trip", config_round_trip),
    ]
    return checks


def run_validation(verbose: bool = True) -> bool:
    """Run every check; print one line per check; True if all pass."""
    ok_all = True
    for name, fn in all_checks():
        try:
            ok, detail = fn()
        except Exception as exc:  # a crashed check is a failed check
            ok, detail = False, f"raised {type(exc).__name__}: {exc}"
        ok_all &= ok
        if verbose:
            print(f"[{'PASS' if ok else 'FAIL'}] {name}: {detail}")
    return ok_all
