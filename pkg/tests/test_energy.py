import math

import numpy as np
import pytest

import fractwophase as ftp
from fractwophase.energy import P_SHARP_BORDERLINE, data_norm_scale
from fractwophase.errors import ValidationError
from fractwophase.grid import l2_inner

from conftest import interval_grid, make_problem


def test_sobolev_exponents_subcritical_2d():
    p_star, p_sharp = ftp.sobolev_exponents(2.0, 0.5, 2)
    assert p_star == pytest.approx(4.0)
    assert p_sharp == pytest.approx(4.0 / 3.0)


def test_sobolev_exponents_subcritical_1d():
    p_star, p_sharp = ftp.sobolev_exponents(2.0, 0.25, 1)
    # direct substitution: dp/(d-sp) and dp/(d(p-1)+sp)
    assert p_star == pytest.approx(2.0 / (1.0 - 0.5))
    assert p_sharp == pytest.approx(2.0 / 1.5)


def test_sobolev_exponents_supercritical():
    p_star, p_sharp = ftp.sobolev_exponents(3.0, 0.5, 1)
    assert math.isinf(p_star)
    assert p_sharp == 1.0


def test_sobolev_exponents_borderline_warns():
    with pytest.warns(UserWarning):
        p_star, p_sharp = ftp.sobolev_exponents(2.0, 0.5, 1)
    assert math.isinf(p_star)
    assert p_sharp == P_SHARP_BORDERLINE


def test_smoothed_heaviside_values():
    eps = 0.3
    assert ftp.smoothed_heaviside(eps / 2.0, eps) == pytest.approx(0.5)
    assert ftp.smoothed_heaviside(-1.0, eps) == 0.0
    assert ftp.smoothed_heaviside(eps, eps) == 1.0
    assert ftp.smoothed_heaviside(5.0, eps) == 1.0
    t = np.linspace(-1, 1, 201)
    h = ftp.smoothed_heaviside(t, eps)
    assert np.all(np.diff(h) >= 0.0)
    assert np.all((h >= 0.0) & (h <= 1.0))


def test_smoothed_positive_part_values():
    eps = 0.3
    assert ftp.smoothed_positive_part(eps, eps) == pytest.approx(eps / 2.0)
    assert ftp.smoothed_positive_part(-2.0, eps) == 0.0
    assert ftp.smoothed_positive_part(0.0, eps) == 0.0
    assert ftp.smoothed_positive_part(2.0 * eps, eps) == pytest.approx(1.5 * eps)


def test_smoothed_positive_part_derivative_and_bracket():
    eps = 0.25
    t = np.linspace(-1.0, 1.0, 401)
    g = ftp.smoothed_positive_part(t, eps)
    # derivative matches the ramp by central differences
    tau = 1e-6
    fd = (ftp.smoothed_positive_part(t + tau, eps)
          - ftp.smoothed_positive_part(t - tau, eps)) / (2.0 * tau)
    assert np.abs(fd - ftp.smoothed_heaviside(t, eps)).max() < 1e-5
    pos = np.maximum(t, 0.0)
    assert np.all(g <= pos + 1e-15)
    assert np.all(pos <= g + eps / 2.0 + 1e-15)
    # convexity through second differences
    assert np.all(np.diff(g, 2) >= -1e-12)


def test_invalid_eps_rejected():
    with pytest.raises(ValidationError):
        ftp.smoothed_heaviside(0.1, 0.0)
    with pytest.raises(ValidationError):
        ftp.smoothed_positive_part(0.1, -1.0)


def test_energy_pure_phase_term():
    grid, mask = interval_grid(256)
    data = make_problem(grid, mask, f=0.0, lam_plus=1.0, lam_minus=1.0, v=-1.0)
    u = ftp.const_field(grid, 0.0, mask)
    # (0 - (-1))^+ = 1 on Omega, all other terms vanish
    assert ftp.energy(u, data) == pytest.approx(mask.measure, rel=1e-12)


def test_energy_zero_everything():
    grid, mask = interval_grid(64)
    data = make_problem(grid, mask)
    u = ftp.const_field(grid, 0.0, mask)
    assert ftp.energy(u, data) == 0.0


def test_energy_gradient_term_parseval():
    grid, mask = interval_grid(256)
    data = make_problem(grid, mask, p=2.0, s=0.5)
    u = ftp.gaussian_bump(grid, 1.0, (0.0,), 0.3, mask)
    plan = ftp.plan_for(grid, 0.5)
    u_hat = np.fft.fftn(u.values)
    parseval = 0.5 * grid.cell_volume / grid.num_nodes * float(
        np.sum(plan.laplacian_multiplier * np.abs(u_hat) ** 2))
    assert ftp.energy(u, data) == pytest.approx(parseval, abs=1e-8)


def test_energy_regularized_equals_energy_without_weights():
    grid, mask = interval_grid(128)
    data = make_problem(grid, mask, f=1.0, v=0.3)
    rng = np.random.default_rng(0)
    u = ftp.GridFunction(grid, np.where(mask.inside, rng.standard_normal(grid.shape), 0.0), True)
    for eps in (1.0, 1e-3):
        assert ftp.energy_regularized(u, data, eps) == pytest.approx(ftp.energy(u, data), rel=1e-12)


def test_energy_regularized_vanishing_phase_at_u_equal_v():
    grid, mask = interval_grid(128)
    v = ftp.gaussian_bump(grid, 0.5, (0.0,), 0.4, mask)
    data = make_problem(grid, mask, f=0.0, lam_plus=2.0, lam_minus=3.0, v=v)
    for eps in (1.0, 0.01):
        got = ftp.energy_regularized(v, data, eps)
        grad_only = make_problem(grid, mask, f=0.0, v=v)
        assert got == pytest.approx(ftp.energy_regularized(v, grad_only, eps), rel=1e-12)


def test_energy_sandwich_bound():
    grid, mask = interval_grid(128)
    data = make_problem(grid, mask, f=0.5, lam_plus=1.3, lam_minus=0.7, v=0.1)
    lam_l1 = ftp.integrate(data.lambda_plus.values + data.lambda_minus.values,
                           grid, "omega", mask)
    rng = np.random.default_rng(1)
    for eps in (0.5, 0.05):
        for _ in range(5):
            u = ftp.GridFunction(grid, np.where(mask.inside, rng.standard_normal(grid.shape), 0.0), True)
            gap = ftp.energy(u, data) - ftp.energy_regularized(u, data, eps)
            assert -1e-12 <= gap <= eps / 2.0 * lam_l1 + 1e-12


def test_energy_regularized_monotone_in_eps():
    grid, mask = interval_grid(128)
    data = make_problem(grid, mask, f=0.2, lam_plus=1.0, lam_minus=1.0, v=0.0)
    rng = np.random.default_rng(2)
    u = ftp.GridFunction(grid, np.where(mask.inside, rng.standard_normal(grid.shape), 0.0), True)
    eps_grid = [2.0, 1.0, 0.5, 0.1, 0.01]
    vals = [ftp.energy_regularized(u, data, eps) for eps in eps_grid]
    # smaller eps means a larger ramp integral, so the energy grows
    assert all(a <= b + 1e-12 for a, b in zip(vals, vals[1:]))


def test_energy_convexity_midpoint():
    grid, mask = interval_grid(128)
    data = make_problem(grid, mask, f=0.3, lam_plus=1.0, lam_minus=0.5, v=0.2, p=3.0)
    rng = np.random.default_rng(3)
    for _ in range(8):
        u = np.where(mask.inside, rng.standard_normal(grid.shape), 0.0)
        w = np.where(mask.inside, rng.standard_normal(grid.shape), 0.0)
        ju = ftp.energy_regularized(ftp.GridFunction(grid, u, True), data, 0.1)
        jw = ftp.energy_regularized(ftp.GridFunction(grid, w, True), data, 0.1)
        jm = ftp.energy_regularized(ftp.GridFunction(grid, 0.5 * (u + w), True), data, 0.1)
        assert jm <= 0.5 * (ju + jw) + 1e-10


def test_first_variation_zero_state_zero_data():
    grid, mask = interval_grid(64)
    data = make_problem(grid, mask)
    u = ftp.const_field(grid, 0.0, mask)
    r = ftp.first_variation(u, data, 0.1)
    assert np.all(r.values == 0.0)


def test_first_variation_linear_case_multiplier():
    grid, mask = interval_grid(256)
    data = make_problem(grid, mask, p=2.0, s=0.6, f=ftp.gaussian_bump(grid, 1.0, (0.0,), 0.3, mask))
    u = ftp.compact_bump(grid, (0.1,), 0.4, 0.7, mask)
    r = ftp.first_variation(u, data, 0.1)
    plan = ftp.plan_for(grid, 0.6)
    ref = np.fft.ifftn(plan.laplacian_multiplier * np.fft.fftn(u.values)).real
    ref = np.where(mask.inside, ref - data.f.values, 0.0)
    assert np.abs(r.values - ref).max() < 1e-8


def test_first_variation_matches_finite_differences():
    grid, mask = interval_grid(128)
    data = make_problem(grid, mask, p=3.0, s=0.7, f=0.4, lam_plus=1.1,
                        lam_minus=0.6, v=0.25)
    rng = np.random.default_rng(4)
    u_vals = np.where(mask.inside, rng.standard_normal(grid.shape), 0.0)
    u = ftp.GridFunction(grid, u_vals, True)
    eps = 0.2
    r = ftp.first_variation(u, data, eps)
    tau = 1e-5
    for _ in range(5):
        w = np.where(mask.inside, rng.standard_normal(grid.shape), 0.0)
        up = ftp.GridFunction(grid, u_vals + tau * w, True)
        um = ftp.GridFunction(grid, u_vals - tau * w, True)
        fd = (ftp.energy_regularized(up, data, eps)
              - ftp.energy_regularized(um, data, eps)) / (2.0 * tau)
        pairing = l2_inner(r.values, w, grid)
        assert fd == pytest.approx(pairing, rel=1e-5)


def test_zeta_saturation_above_band():
    grid, mask = interval_grid(128)
    lam_p = ftp.gaussian_bump(grid, 2.0, (0.0,), 0.5, mask)
    data = make_problem(grid, mask, lam_plus=lam_p, lam_minus=1.0, v=0.0)
    u = ftp.const_field(grid, 1.0, mask)  # u - v = 1 >= eps everywhere on Omega
    zeta, chi_gt, chi_lt = ftp.zeta_from_state(u, data, 0.5)
    inside = mask.inside
    assert np.allclose(zeta.values[inside], lam_p.values[inside])
    assert np.all(chi_gt.values[inside] == 1.0)
    assert np.all(chi_lt.values[inside] == 0.0)


def test_zeta_zero_at_coincidence():
    grid, mask = interval_grid(128)
    v = ftp.gaussian_bump(grid, 0.7, (0.0,), 0.4, mask)
    data = make_problem(grid, mask, lam_plus=1.0, lam_minus=1.0, v=v)
    zeta, chi_gt, chi_lt = ftp.zeta_from_state(v, data, 0.1)
    assert np.all(zeta.values == 0.0)
    assert np.all(chi_gt.values == 0.0)
    assert np.all(chi_lt.values == 0.0)


def test_zeta_matches_scalar_recomputation():
    grid, mask = interval_grid(128)
    rng = np.random.default_rng(5)
    v = ftp.GridFunction(grid, np.where(mask.inside, rng.standard_normal(grid.shape), 0.0), True)
    lam_p = ftp.grid_function(grid, np.abs(rng.standard_normal(grid.shape)), mask)
    lam_m = ftp.grid_function(grid, np.abs(rng.standard_normal(grid.shape)), mask)
    data = make_problem(grid, mask, lam_plus=lam_p, lam_minus=lam_m, v=v)
    u = ftp.GridFunction(grid, np.where(mask.inside, rng.standard_normal(grid.shape), 0.0), True)
    eps = 0.3
    zeta, chi_gt, chi_lt = ftp.zeta_from_state(u, data, eps)

    def ramp(t):
        return min(max(t / eps, 0.0), 1.0)

    idx = np.where(mask.inside)[0]
    for i in idx[:: max(1, len(idx) // 40)]:
        d = u.values[i] - v.values[i]
        assert chi_gt.values[i] == pytest.approx(ramp(d), abs=1e-15)
        assert chi_lt.values[i] == pytest.approx(ramp(-d), abs=1e-15)
        expected = lam_p.values[i] * ramp(d) - lam_m.values[i] * ramp(-d)
        assert zeta.values[i] == pytest.approx(expected, abs=1e-15)
    # two-sided bound and disjoint carriers
    assert np.all(zeta.values <= lam_p.values + 1e-15)
    assert np.all(zeta.values >= -lam_m.values - 1e-15)
    assert np.all(chi_gt.values * chi_lt.values == 0.0)


def test_problem_data_rejects_negative_weights():
    grid, mask = interval_grid(64)
    lam = ftp.grid_function(grid, -0.1 * mask.indicator, mask)
    with pytest.raises(ValidationError):
        make_problem(grid, mask, lam_minus=lam)


def test_problem_data_rejects_bad_exponent_window():
    grid, mask = ftp.make_grid(ftp.Ball((0.0, 0.0), 1.0), 32, 4.0)
    # d=2, p=2, s=0.5 gives p# = 4/3; q = 1 sits below it
    with pytest.raises(ValidationError):
        make_problem(grid, mask, p=2.0, s=0.5, q=1.0)


def test_problem_data_masks_its_fields():
    grid, mask = interval_grid(64)
    data = make_problem(grid, mask, f=2.0)
    assert np.all(data.f.values[~mask.inside] == 0.0)
    assert data.f.zero_outside_omega


def test_data_norm_scale_positive():
    grid, mask = interval_grid(64)
    data = make_problem(grid, mask, f=1.0, lam_plus=1.0)
    assert data_norm_scale(data) > 1.0
