"""Minimization of the regularized energies and the continuation drivers.

The regularized energy is C^1 and convex, so a projected first-order method
suffices: adaptive two-point (Barzilai-Borwein) steps safeguarded by Armijo
backtracking, with projection = zeroing outside Omega after every step.  The
two-phase solution is obtained by driving the regularization parameter down
a geometric schedule with warm starts and reading the quasi-characteristic
carriers off the final regularized state.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .energy import (
    ProblemData,
    RegularizationParams,
    data_norm_scale,
    energy,
    energy_regularized,
    residual_arrays,
    smoothed_heaviside,
    smoothed_positive_part,
    zeta_from_state,
)
from .errors import (
    DegenerateFitError,
    NonConvergenceError,
    ValidationError,
)
from .fractional import p_flux_arrays, plan_for
from .grid import (
    GridFunction,
    OmegaMask,
    integrate,
    l2_inner,
    l2_norm_values,
    vector_lp_norm_arrays,
)


@dataclass(frozen=True)
class SolverConfig:
    """Knobs of the first-order descent."""

    max_iters: int = 50000
    grad_tol: float = 1e-7
    step_rule: str = "adaptive-two-point"
    armijo_c: float = 1e-4
    max_backtracks: int = 50
    seed: int = 0
    initial_step: float = 1.0

    def __post_init__(self):
        if not self.max_iters >= 1:
            raise ValidationError("max_iters must be >= 1")
        if not self.grad_tol > 0.0:
            raise ValidationError("grad_tol must be positive")
        if self.step_rule not in ("adaptive-two-point", "fixed"):
            raise ValidationError(f"unknown step rule {self.step_rule!r}")
        if not 0.0 < self.armijo_c < 1.0:
            raise ValidationError("armijo_c must lie in (0, 1)")
        if not self.max_backtracks >= 1:
            raise ValidationError("max_backtracks must be >= 1")


@dataclass
class MinimizeResult:
    u: np.ndarray
    iterations: int
    residual: float
    energy: float
    energy_history: list[float]


@dataclass
class Solution:
    """Converged two-phase triple plus the multiplier and run diagnostics."""

    u: GridFunction
    chi_gt: GridFunction
    chi_lt: GridFunction
    zeta: GridFunction
    diagnostics: dict
    v: GridFunction | None = None


@dataclass
class RateReport:
    """Outcome of a regularization-rate study."""

    eps: list[float]
    errors: list[float]
    noise_floor: float
    usable: list[bool]
    fitted_slope: float | None
    regularization_inactive: bool = False


@dataclass
class MembraneSolution:
    u: GridFunction
    w: GridFunction
    chi_gt: GridFunction
    chi_lt: GridFunction
    zeta: GridFunction
    diagnostics: dict


def residual_tolerance(data: ProblemData, config: SolverConfig) -> float:
    """Stopping threshold ``grad_tol * (1 + ||f||_2 + ||lam+||_2 + ||lam-||_2)``."""
    return config.grad_tol * data_norm_scale(data)


def minimize_bb(eval_fn, u0: np.ndarray, tol: float, config: SolverConfig,
                grid, initial_step: float | None = None) -> MinimizeResult:
    """Generic projected BB descent on a convex C^1 functional.

    ``eval_fn(u) -> (J, R)`` must return the energy and its (already
    projected) gradient field.  Iterates until the weighted L^2 norm of R
    drops below ``tol``.
    """
    cell = grid.cell_volume

    def nrm2(a):
        return float(np.vdot(a, a).real) * cell

    u = np.array(u0, dtype=float)
    J, R = eval_fn(u)
    g2 = nrm2(R)
    history = [J]
    alpha = initial_step if initial_step is not None else config.initial_step
    prev_u = None
    prev_R = None
    slack = 1e-12

    for it in range(config.max_iters):
        if math.sqrt(g2) <= tol:
            return MinimizeResult(u, it, math.sqrt(g2), J, history)
        if config.step_rule == "adaptive-two-point" and prev_u is not None:
            du = u - prev_u
            dg = R - prev_R
            sy = float(np.vdot(du, dg).real)
            if sy > 1e-300:
                alpha = float(np.vdot(du, du).real) / sy
            alpha = min(max(alpha, 1e-14), 1e10)
        elif config.step_rule == "fixed":
            alpha = initial_step if initial_step is not None else config.initial_step

        accepted = False
        a = alpha
        for _ in range(config.max_backtracks):
            u_try = u - a * R
            J_try, R_try = eval_fn(u_try)
            if J_try <= J - config.armijo_c * a * g2 + slack * (1.0 + abs(J)):
                accepted = True
                break
            a *= 0.5
        if not accepted:
            # flat to machine precision near the minimum: accept if not uphill
            if J_try <= J + slack * (1.0 + abs(J)):
                accepted = True
            else:
                raise NonConvergenceError(it + 1, math.sqrt(g2))
        prev_u, prev_R = u, R
        u, J, R = u_try, J_try, R_try
        g2 = nrm2(R)
        history.append(J)
        alpha = a

    if math.sqrt(g2) <= tol:
        return MinimizeResult(u, config.max_iters, math.sqrt(g2), J, history)
    raise NonConvergenceError(config.max_iters, math.sqrt(g2))


def _default_initial_step(data: ProblemData, eps: float) -> float:
    """Crude inverse-Lipschitz estimate of the regularized gradient."""
    plan = plan_for(data.grid, data.s)
    lam_max = float(np.max(data.lambda_plus.values + data.lambda_minus.values))
    lip = float(plan.laplacian_multiplier.max()) + lam_max / eps + 1.0
    return 1.0 / lip


def solve_regularized(data: ProblemData, eps: float, config: SolverConfig,
                      warm_start: GridFunction | None = None) -> GridFunction:
    """Minimize the eps-regularized energy, returning the zero-extended state."""
    if not eps > 0.0:
        raise ValidationError(f"eps must be positive, got {eps}")
    data.require_v()
    u, _ = _solve_regularized_info(data, eps, config, warm_start)
    return u


def _solve_regularized_info(data: ProblemData, eps: float, config: SolverConfig,
                            warm_start: GridFunction | None):
    inside = data.mask.inside
    u0 = np.zeros(data.grid.shape) if warm_start is None else np.array(warm_start.values)
    u0 = np.where(inside, u0, 0.0)

    def eval_fn(vals):
        vals = np.where(inside, vals, 0.0)
        gf = GridFunction(data.grid, vals, True)
        J = energy_regularized(gf, data, eps)
        R = residual_arrays(vals, data, eps)
        return J, R

    tol = residual_tolerance(data, config)
    res = minimize_bb(eval_fn, u0, tol, config, data.grid,
                      initial_step=_default_initial_step(data, eps))
    u = GridFunction(data.grid, np.where(inside, res.u, 0.0), True)
    return u, res


def solve_two_phase(data: ProblemData, reg: RegularizationParams,
                    config: SolverConfig,
                    warm_start: GridFunction | None = None) -> Solution:
    """Continuation down the eps schedule; extract the two-phase triple.

    The carriers chi are read off the final regularized state through the
    ramp H_eps (never hard-thresholded), so they take values in [0, 1] on
    the inter-phase band and the multiplier identity
    ``zeta = lam+ chi_gt - lam- chi_lt`` holds exactly nodewise.
    """
    data.require_v()
    u = warm_start
    stage_iters: list[int] = []
    stage_residuals: list[float] = []
    final_eps = reg.final_eps
    for k, eps in enumerate(reg.schedule()):
        try:
            u, res = _solve_regularized_info(data, eps, config, u)
        except NonConvergenceError as err:
            raise NonConvergenceError(err.iterations, err.residual, stage=k) from err
        stage_iters.append(res.iterations)
        stage_residuals.append(res.residual)

    zeta, chi_gt, chi_lt = zeta_from_state(u, data, final_eps)
    v = data.require_v()
    diag = {
        "final_eps": final_eps,
        "iters": stage_iters,
        "residual": stage_residuals[-1],
        "energy": energy(u, data),
        "interphase_measure": measure_interphase(u, v, final_eps, data.mask),
        "stage_eps": reg.schedule(),
        "stage_residuals": stage_residuals,
        "weak_residual_max": _weak_residual_max(u, zeta, data, config),
        # carried for report assembly, never serialized
        "mask": data.mask,
        "p": data.p,
    }
    return Solution(u=u, chi_gt=chi_gt, chi_lt=chi_lt, zeta=zeta,
                    diagnostics=diag, v=v)


def _weak_residual_max(u: GridFunction, zeta: GridFunction, data: ProblemData,
                       config: SolverConfig, n_dirs: int = 10) -> float:
    """Max defect of the weak two-phase equation over seeded random directions.

    Checks ``<|D^s u|^(p-2) D^s u, D^s w> + <zeta - f, w>`` normalized by
    ``||w||_2`` for zero-extended random w.
    """
    plan = plan_for(data.grid, data.s)
    flux = p_flux_arrays(plan.gradient_arrays(u.values), data.p)
    rng = np.random.default_rng(config.seed)
    worst = 0.0
    for _ in range(n_dirs):
        w = np.where(data.mask.inside, rng.standard_normal(data.grid.shape), 0.0)
        gw = plan.gradient_arrays(w)
        lhs = sum(l2_inner(a, b, data.grid) for a, b in zip(flux, gw))
        lhs += l2_inner((zeta.values - data.f.values) * data.mask.indicator, w, data.grid)
        worst = max(worst, abs(lhs) / max(l2_norm_values(w, data.grid), 1e-300))
    return worst


def measure_interphase(u: GridFunction, v: GridFunction, delta: float,
                       mask: OmegaMask) -> float:
    """Cell-volume measure of the band ``{x in Omega : |u - v| < delta}``."""
    if not delta > 0.0:
        raise ValidationError(f"delta must be positive, got {delta}")
    band = (np.abs(u.values - v.values) < delta) & mask.inside
    return float(band.sum()) * u.grid.cell_volume


def check_nondegeneracy(data: ProblemData, shift: GridFunction | None = None
                        ) -> tuple[GridFunction, bool]:
    """Nodewise test of ``lam+ < f_eff`` or ``f_eff < -lam-`` on Omega.

    ``f_eff = f + shift`` accommodates a level-set translation proxy.  The
    global flag is the conjunction over all Omega nodes.
    """
    f_eff = data.f.values + (0.0 if shift is None else shift.values)
    ok = (data.lambda_plus.values < f_eff) | (f_eff < -data.lambda_minus.values)
    inside = data.mask.inside
    nodewise = GridFunction(data.grid, np.where(inside, ok, 0.0).astype(float), True)
    return nodewise, bool(ok[inside].all())


def epsilon_rate_study(data: ProblemData, eps_list: list[float],
                       config: SolverConfig) -> RateReport:
    """Fit the log-log slope of the gradient error along the eps schedule.

    The reference state is an extra solve at ``min(eps)/8``; entries below
    ten times the solver stopping threshold are excluded from the fit.
    """
    eps_list = [float(e) for e in eps_list]
    if len(eps_list) < 4:
        raise ValidationError("rate study needs at least 4 eps values")
    if any(b >= a for a, b in zip(eps_list, eps_list[1:])):
        raise ValidationError("eps_list must be strictly decreasing")

    plan = plan_for(data.grid, data.s)
    states = []
    u = None
    for eps in eps_list:
        u = solve_regularized(data, eps, config, warm_start=u)
        states.append(u)
    # reference: continue the warm-started path down to eps_min / 8
    eps_ref = eps_list[-1]
    for _ in range(3):
        eps_ref /= 2.0
        u = solve_regularized(data, eps_ref, config, warm_start=u)
    g_ref = plan.gradient_arrays(u.values)

    errors = []
    for state in states:
        g = plan.gradient_arrays(state.values)
        errors.append(vector_lp_norm_arrays(
            [a - b for a, b in zip(g, g_ref)], data.grid, data.p))

    floor = 10.0 * residual_tolerance(data, config)
    usable = [e > floor for e in errors]
    if not any(usable):
        return RateReport(eps_list, errors, floor, usable, None,
                          regularization_inactive=True)
    if sum(usable) < 3:
        raise DegenerateFitError(
            f"only {sum(usable)} rate points above the noise floor {floor:.3e}"
        )
    xs = np.log([e for e, ok in zip(eps_list, usable) if ok])
    ys = np.log([e for e, ok in zip(errors, usable) if ok])
    slope = float(np.polyfit(xs, ys, 1)[0])
    return RateReport(eps_list, errors, floor, usable, slope)


# ---------------------------------------------------------------------------
# Two-membrane system
# ---------------------------------------------------------------------------

def _membrane_eval(data: ProblemData, g: GridFunction, eps: float):
    """Joint energy/residual of the paired-membrane functional.

    State is stacked as ``(2, *shape)``; the coupling term penalizes the gap
    ``w - z`` and the multiplier enters the two residuals with opposite sign.
    """
    plan = plan_for(data.grid, data.s)
    inside = data.mask.inside
    lam_p = data.lambda_plus.values
    lam_m = data.lambda_minus.values
    f_vals = data.f.values
    g_vals = np.where(inside, g.values, 0.0)
    p = data.p
    grid = data.grid

    def eval_fn(state):
        w = np.where(inside, state[0], 0.0)
        z = np.where(inside, state[1], 0.0)
        gw = plan.gradient_arrays(w)
        gz = plan.gradient_arrays(z)
        mag_w = np.sqrt(sum(a ** 2 for a in gw))
        mag_z = np.sqrt(sum(a ** 2 for a in gz))
        diff = w - z
        J = integrate(mag_w ** p + mag_z ** p, grid, "box") / p
        J += integrate(lam_p * smoothed_positive_part(diff, eps)
                       + lam_m * smoothed_positive_part(-diff, eps)
                       - f_vals * w - g_vals * z, grid, "omega", data.mask)
        coupling = (lam_p * smoothed_heaviside(diff, eps)
                    - lam_m * smoothed_heaviside(-diff, eps))
        rw = -plan.divergence_arrays(p_flux_arrays(gw, p)) + coupling - f_vals
        rz = -plan.divergence_arrays(p_flux_arrays(gz, p)) - coupling - g_vals
        R = np.stack([np.where(inside, rw, 0.0), np.where(inside, rz, 0.0)])
        return float(J), R

    return eval_fn


def solve_two_membrane(data: ProblemData, g: GridFunction,
                       reg: RegularizationParams, config: SolverConfig,
                       warm_start: tuple[GridFunction, GridFunction] | None = None
                       ) -> MembraneSolution:
    """Jointly minimize the paired-membrane energy along the eps schedule.

    ``data`` carries (p, s, f, lam+/-); ``g`` is the source of the second
    membrane.  Returns both states, the shared carriers of the gap
    ``u - w``, and the shared multiplier.
    """
    if g.grid != data.grid:
        raise ValidationError("second-membrane source must share the grid")
    inside = data.mask.inside
    if warm_start is None:
        state = np.zeros((2,) + data.grid.shape)
    else:
        state = np.stack([np.where(inside, warm_start[0].values, 0.0),
                          np.where(inside, warm_start[1].values, 0.0)])

    scale = data_norm_scale(data) + l2_norm_values(
        np.where(inside, g.values, 0.0), data.grid)
    tol = config.grad_tol * scale
    stage_iters = []
    res = None
    for k, eps in enumerate(reg.schedule()):
        eval_fn = _membrane_eval(data, g, eps)
        try:
            res = minimize_bb(eval_fn, state, tol, config, data.grid,
                              initial_step=_default_initial_step(data, eps))
        except NonConvergenceError as err:
            raise NonConvergenceError(err.iterations, err.residual, stage=k) from err
        state = np.stack([np.where(inside, res.u[0], 0.0),
                          np.where(inside, res.u[1], 0.0)])
        stage_iters.append(res.iterations)

    final_eps = reg.final_eps
    u = GridFunction(data.grid, state[0], True)
    w = GridFunction(data.grid, state[1], True)
    diff = state[0] - state[1]
    chi_gt = np.where(inside, smoothed_heaviside(diff, final_eps), 0.0)
    chi_lt = np.where(inside, smoothed_heaviside(-diff, final_eps), 0.0)
    zeta = data.lambda_plus.values * chi_gt - data.lambda_minus.values * chi_lt
    diag = {
        "final_eps": final_eps,
        "iters": stage_iters,
        "residual": res.residual,
        "energy": res.energy,
        "interphase_measure": measure_interphase(u, w, final_eps, data.mask),
    }
    return MembraneSolution(
        u=u, w=w,
        chi_gt=GridFunction(data.grid, chi_gt, True),
        chi_lt=GridFunction(data.grid, chi_lt, True),
        zeta=GridFunction(data.grid, zeta, True),
        diagnostics=diag,
    )


def apriori_gradient_bound(data: ProblemData, u: GridFunction) -> tuple[float, float]:
    """Left and right side of the a-priori gradient estimate.

    Returns ``(||D^s u||_p^(p-1), ||lam+||_q + ||lam-||_q + ||f||_{p#})``;
    the dimensionless constant relating them is grid-dependent and is fitted
    once by the test battery.
    """
    from .grid import lp_norm_values as _lp

    plan = plan_for(data.grid, data.s)
    grads = plan.gradient_arrays(u.values)
    lhs = vector_lp_norm_arrays(grads, data.grid, data.p) ** (data.p - 1.0)

    def data_norm(vals, q):
        if math.isinf(q):
            return float(np.max(np.abs(vals[data.mask.inside]), initial=0.0))
        qq = max(q, 1.0 + 1e-6)  # p# may sit at its sentinel value 1
        return _lp(vals, data.grid, qq, "omega", data.mask)

    rhs = (data_norm(data.lambda_plus.values, data.q)
           + data_norm(data.lambda_minus.values, data.q)
           + data_norm(data.f.values, data.p_sharp))
    return float(lhs), float(rhs)
