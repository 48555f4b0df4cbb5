"""Acceptance criteria, one test per criterion, at their stated tolerances.

Each test prints one `[criterion k] PASS/FAIL` line (visible with `pytest -s`
or on failure).  Budgeted runtimes are asserted with the stated limits.
"""

import time

import numpy as np
import pytest

import fractwophase as ftp
from fractwophase.fractional import p_flux_arrays
from fractwophase.grid import l2_inner, l2_norm_values
from fractwophase.solver import residual_tolerance

from conftest import (
    interval_grid,
    make_problem,
    nondegenerate_problem,
    odd_problem,
    vdependence_problem,
)


def _report(k, ok, detail):
    print(f"[criterion {k}] {'PASS' if ok else 'FAIL'} - {detail}")
    assert ok, f"criterion {k}: {detail}"


def test_criterion_1_adjointness():
    t0 = time.time()
    worst = 0.0
    cases = [ftp.make_grid(ftp.Interval(-1.0, 1.0), 512, 4.0)[0],
             ftp.make_grid(ftp.Ball((0.0, 0.0), 1.0), 128, 4.0)[0]]
    rng = np.random.default_rng(0)
    for grid in cases:
        d = grid.dim
        for s in (0.3, 0.6, 0.9, 1.0):
            for _ in range(20):
                u = ftp.GridFunction(grid, rng.standard_normal(grid.shape))
                F = ftp.vector_field(grid, [rng.standard_normal(grid.shape)
                                            for _ in range(d)])
                g = ftp.riesz_gradient(u, s)
                div = ftp.riesz_divergence(F, s)
                lhs = sum(l2_inner(a.values, b.values, grid)
                          for a, b in zip(g.components, F.components))
                rhs = l2_inner(u.values, div.values, grid)
                denom = ftp.vector_lp_norm(g, 2.0) * ftp.vector_lp_norm(F, 2.0)
                worst = max(worst, abs(lhs + rhs) / denom)
    elapsed = time.time() - t0
    _report(1, worst <= 1e-10 and elapsed < 5.0,
            f"max defect/norms {worst:.3e} (<= 1e-10), runtime {elapsed:.2f}s (< 5s)")


def test_criterion_2_oracle_equivalence():
    t0 = time.time()
    grid = ftp.BoxGrid(1, (-2.0,), (3.0,), (256,), padding_factor=5.0)
    bump = ftp.compact_bump(grid, (0.5,), 0.35, 1.0)
    worst = 0.0
    for s in (0.4, 0.7):
        spec = ftp.riesz_gradient(bump, s)
        dense = ftp.dense_oracle_gradient(bump, s)
        diff = ftp.vector_field(grid, [spec.components[0].values
                                       - dense.components[0].values])
        worst = max(worst, ftp.vector_lp_norm(diff, 2.0) / ftp.vector_lp_norm(spec, 2.0))
    elapsed = time.time() - t0
    _report(2, worst <= 5e-2 and elapsed < 30.0,
            f"max relative L2 deviation {worst:.4f} (<= 0.05), runtime {elapsed:.2f}s (< 30s)")


def test_criterion_3_epsilon_rate():
    # stated problem: 1D, Omega=(-1,1), padding 4, n=1024, f=1, lam=1, v=0
    t0 = time.time()
    grid, mask = ftp.make_grid(ftp.Interval(-1.0, 1.0), 1024, 4.0)
    eps_list = [2.0 ** (-k) for k in range(2, 10)]
    slopes = {}
    for p, band, tol in ((2.0, (0.35, 0.65), 1e-8), (3.0, (0.18, 0.48), 1e-6)):
        data = make_problem(grid, mask, p=p, s=0.6, f=1.0, lam_plus=1.0, lam_minus=1.0)
        cfg = ftp.SolverConfig(grad_tol=tol, max_iters=150000)
        report = ftp.epsilon_rate_study(data, eps_list, cfg)
        slopes[p] = (report.fitted_slope, band)
    elapsed = time.time() - t0
    ok = elapsed < 300.0 and all(band[0] <= slope <= band[1]
                                 for slope, band in slopes.values())
    detail = ", ".join(f"p={p:g}: slope {s:.3f} vs band [{b[0]}, {b[1]}]"
                       for p, (s, b) in slopes.items())
    _report(3, ok, detail + f", runtime {elapsed:.1f}s (< 300s)")


def _sandwich_holds(sol, data):
    eps = sol.diagnostics["final_eps"]
    inside = data.mask.inside
    d = sol.u.values - sol.v.values
    checks = [
        np.all((sol.chi_gt.values >= 0.0) & (sol.chi_gt.values <= 1.0)),
        np.all((sol.chi_lt.values >= 0.0) & (sol.chi_lt.values <= 1.0)),
        np.all(sol.chi_gt.values[(d > eps) & inside] == 1.0),
        np.all(sol.chi_gt.values[(d < -eps) & inside] == 0.0),
        np.all(sol.chi_lt.values[(-d > eps) & inside] == 1.0),
        np.all(sol.chi_lt.values[(-d < -eps) & inside] == 0.0),
        np.array_equal(sol.zeta.values,
                       data.lambda_plus.values * sol.chi_gt.values
                       - data.lambda_minus.values * sol.chi_lt.values),
    ]
    return all(bool(c) for c in checks)


def _battery_solutions():
    cfg = ftp.SolverConfig(grad_tol=1e-8, max_iters=80000)
    reg = ftp.RegularizationParams(1.0, 0.5, 10)
    problems = [nondegenerate_problem(n=256), odd_problem(n=256),
                vdependence_problem(n=256)]
    return [(data, ftp.solve_two_phase(data, reg, cfg), cfg) for data in problems]


@pytest.fixture(scope="module")
def battery():
    return _battery_solutions()


def test_criterion_4_sandwich_invariant(battery):
    ok = all(_sandwich_holds(sol, data) for data, sol, _ in battery)
    _report(4, ok, f"sandwich and multiplier identity on {len(battery)} converged solutions")


def test_criterion_5_variational_inequality(battery):
    t0 = time.time()
    worst = -np.inf
    for data, sol, cfg in battery:
        grid, mask = data.grid, data.mask
        plan = ftp.plan_for(grid, data.s)
        flux = p_flux_arrays(plan.gradient_arrays(sol.u.values), data.p)
        v = data.v.values

        def phase_energy(w):
            dd = w - v
            return ftp.integrate(data.lambda_plus.values * np.maximum(dd, 0.0)
                                 + data.lambda_minus.values * np.maximum(-dd, 0.0),
                                 grid, "omega", mask)

        tol = 10.0 * residual_tolerance(data, cfg)
        rng = np.random.default_rng(cfg.seed)
        for _ in range(10):
            w = np.where(mask.inside, rng.standard_normal(grid.shape), 0.0)
            gd = plan.gradient_arrays(w - sol.u.values)
            lhs = phase_energy(w) - phase_energy(sol.u.values)
            rhs = (l2_inner(data.f.values * mask.indicator, w - sol.u.values, grid)
                   - sum(l2_inner(a, b, grid) for a, b in zip(flux, gd)))
            worst = max(worst, (rhs - lhs) / tol)
    elapsed = time.time() - t0
    _report(5, worst <= 1.0 and elapsed < 60.0,
            f"max VI violation {worst:.3f} in units of solver tolerance, "
            f"runtime {elapsed:.1f}s (< 60s)")


def test_criterion_6_s_stability():
    t0 = time.time()
    data = nondegenerate_problem(n=256)
    cfg = ftp.SolverConfig(grad_tol=1e-8, max_iters=80000)
    reg = ftp.RegularizationParams(1.0, 0.5, 12)
    s_list = [0.5, 0.7, 0.85, 0.95, 0.99, 1.0]
    report = ftp.s_sweep(lambda s: data.with_s(s), s_list, reg, cfg)
    errs = report.grad_errors[:-1]           # fractional orders only
    floor = 10.0 * residual_tolerance(data, cfg)
    monotone = all(a > b for a, b in zip(errs, errs[1:]) if a > floor)
    final_ok = errs[-1] <= 0.25 * errs[0]
    gaps = report.pairing_gaps()[-2]         # s = 0.99 against s = 1
    weak_ok = gaps.max() <= 1e-2
    elapsed = time.time() - t0
    ok = monotone and final_ok and weak_ok and elapsed < 600.0
    _report(6, ok,
            f"grad errors {['%.3f' % e for e in errs]} monotone={monotone}, "
            f"final/first {errs[-1] / errs[0]:.3f} (<= 0.25), max pairing gap "
            f"{gaps.max():.2e} (<= 1e-2), runtime {elapsed:.1f}s (< 600s)")


def test_criterion_7_v_continuity():
    t0 = time.time()
    data = vdependence_problem(n=256)
    cfg = ftp.SolverConfig(grad_tol=5e-5, max_iters=60000)
    reg = ftp.RegularizationParams(1.0, 0.5, 7)
    bump = ftp.compact_bump(data.grid, (0.0,), 0.25, 0.5)
    v_list = [ftp.GridFunction(data.grid,
                               2.0 ** (-n) * bump.values * data.mask.indicator, True)
              for n in range(1, 7)]
    report = ftp.v_perturbation_study(data, v_list, reg, cfg)
    errs = report.grad_errors
    decreasing = all(a > b for a, b in zip(errs, errs[1:]))
    final_ok = errs[-1] <= report.noise_floor
    elapsed = time.time() - t0
    ok = decreasing and final_ok and elapsed < 300.0
    _report(7, ok,
            f"errors {['%.2e' % e for e in errs]} decreasing={decreasing}, "
            f"final {errs[-1]:.2e} <= floor {report.noise_floor:.2e}, "
            f"runtime {elapsed:.1f}s (< 300s)")


def test_criterion_8_qvi_fixed_points():
    t0 = time.time()
    grid, mask = interval_grid(256)
    data = make_problem(grid, mask, p=2.0, s=0.6, f=2.0, lam_plus=0.5, lam_minus=0.5)
    fp = ftp.FixedPointConfig(theta=0.5, max_outer=30, fp_tol=1e-5,
                              inner=ftp.SolverConfig(grad_tol=1e-7, max_iters=80000),
                              reg=ftp.RegularizationParams(1.0, 0.5, 10))

    # (a) Nemytskii phi(x, w) = clamp(w, -1, 1) / 2
    op_a = ftp.NemytskiiPhi(mask=mask, func_name="scaled_clamp", params=(0.5, -1.0, 1.0),
                            phi0=ftp.const_field(grid, 0.0, mask), c1=0.5)
    sol_a, hist_a = ftp.solve_qvi(data, op_a, fp)
    part_a = len(hist_a) <= 30 and hist_a[-1] <= fp.fp_tol

    # (b) affine reflection: role-swapped system against the original level set
    v0 = ftp.gaussian_bump(grid, 0.4, (0.2,), 0.3, mask)
    op_b = ftp.AffineReflectionPhi(mask=mask, v0=v0)
    sol_b, hist_b = ftp.solve_qvi(data, op_b, fp)
    eps_b = sol_b.diagnostics["final_eps"]
    inside = mask.inside
    d0 = sol_b.u.values - v0.values
    swap_ok = (np.all(sol_b.chi_gt.values[(d0 < -eps_b) & inside] == 1.0)
               and np.all(sol_b.chi_gt.values[(d0 > eps_b) & inside] == 0.0))
    lap = ftp.fractional_p_laplacian_apply(sol_b.u, data.s, data.p)
    res = (lap.values + data.lambda_plus.values * sol_b.chi_gt.values
           - data.lambda_minus.values * sol_b.chi_lt.values - data.f.values)
    res_norm = l2_norm_values(np.where(inside, res, 0.0), grid)
    part_b = (hist_b[-1] <= fp.fp_tol and swap_ok
              and res_norm <= 10.0 * residual_tolerance(data, fp.inner))

    # (c) coupled membrane at p = 2, s = t = 1 under the strict sign condition
    data_c = make_problem(grid, mask, p=2.0, s=1.0, f=3.0, lam_plus=0.5, lam_minus=0.5)
    op_c = ftp.CoupledMembranePhi(mask=mask, t=1.0, p=2.0,
                                  g_minus=ftp.const_field(grid, -0.5, mask),
                                  g_plus=ftp.const_field(grid, 0.5, mask))
    sol_c, hist_c = ftp.solve_qvi(data_c, op_c, fp)
    meas = ftp.measure_interphase(sol_c.u, sol_c.v, sol_c.diagnostics["final_eps"], mask)
    part_c = hist_c[-1] <= fp.fp_tol and meas <= 0.02 * mask.measure

    elapsed = time.time() - t0
    ok = part_a and part_b and part_c and elapsed < 600.0
    _report(8, ok,
            f"nemytskii {len(hist_a)} outer (res {hist_a[-1]:.1e}); reflection swapped-system "
            f"residual {res_norm:.1e}; membrane interphase {meas:.4f} "
            f"(<= {0.02 * mask.measure:.4f}); runtime {elapsed:.1f}s (< 600s)")


def test_criterion_9_two_membrane_symmetry():
    t0 = time.time()
    grid, mask = interval_grid(256)
    f = ftp.gaussian_bump(grid, 1.0, (0.0,), 0.35, mask)
    g = ftp.GridFunction(grid, -f.values, True)
    lam = ftp.const_field(grid, 0.3, mask)
    data = ftp.ProblemData(grid=grid, mask=mask, p=2.0, s=0.6, f=f,
                           lambda_plus=lam, lambda_minus=lam, v=None, q=2.0)
    cfg = ftp.SolverConfig(grad_tol=1e-10, max_iters=150000)
    sol = ftp.solve_two_membrane(data, g, ftp.RegularizationParams(1.0, 0.5, 12), cfg)
    asym = np.abs(sol.u.values + sol.w.values).max()

    # per-membrane regularization errors agree within a factor of two
    plan = ftp.plan_for(grid, 0.6)
    ref = ftp.solve_two_membrane(data, g, ftp.RegularizationParams(1.0, 0.5, 10), cfg)
    gu_ref = plan.gradient_arrays(ref.u.values)
    gw_ref = plan.gradient_arrays(ref.w.values)
    ratios = []
    from fractwophase.grid import vector_lp_norm_arrays

    for steps in (3, 4, 5, 6):
        sk = ftp.solve_two_membrane(data, g, ftp.RegularizationParams(1.0, 0.5, steps), cfg)
        gu = plan.gradient_arrays(sk.u.values)
        gw = plan.gradient_arrays(sk.w.values)
        e_u = vector_lp_norm_arrays([a - b for a, b in zip(gu, gu_ref)], grid, 2.0)
        e_w = vector_lp_norm_arrays([a - b for a, b in zip(gw, gw_ref)], grid, 2.0)
        ratios.append(e_u / max(e_w, 1e-300))
    ratio_ok = all(0.5 <= r <= 2.0 for r in ratios)
    elapsed = time.time() - t0
    ok = asym <= 1e-6 and ratio_ok and elapsed < 300.0
    _report(9, ok,
            f"max |u + w| = {asym:.2e} (<= 1e-6), eps-error ratios "
            f"{['%.2f' % r for r in ratios]} within [0.5, 2], runtime {elapsed:.1f}s (< 300s)")
