"""Stability studies: order s to 1 and continuous dependence on the level set.

Weak-* convergence of the quasi-characteristic carriers is only testable
against a fixed dictionary of test functions, so the module carries a
versioned battery of six smooth tensor-product bumps with centers on a
coarse lattice in Omega and support width a quarter of the Omega diameter.
Subsequence statements are proxied by trend checks over the full computed
sequence.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .energy import ProblemData, RegularizationParams
from .errors import InterphaseNotNegligibleError, NonConvergenceError, ValidationError
from .fractional import plan_for
from .grid import (
    GridFunction,
    OmegaMask,
    compact_bump,
    integrate,
    lp_norm_values,
    vector_lp_norm_arrays,
)
from .solver import Solution, SolverConfig, residual_tolerance, solve_two_phase

BUMP_BATTERY_VERSION = 1
BUMP_COUNT = 6

#: Fraction of |Omega| under which the discrete inter-phase band counts as
#: negligible and strong phase convergence is reported.
INTERPHASE_FRACTION = 0.02


def worker_count() -> int:
    """Parallel width for independent solves; capped by FRACTWOPHASE_THREADS."""
    raw = os.environ.get("FRACTWOPHASE_THREADS", "1")
    try:
        return max(1, int(raw))
    except ValueError:
        return 1


def battery_bumps(mask: OmegaMask) -> list[GridFunction]:
    """Fixed dictionary of six smooth bumps (version 1).

    Centers live on a coarse lattice inside the bounding box of Omega (six
    points in 1D, a 3 x 2 lattice in 2D); the support diameter is a quarter
    of the Omega diameter.
    """
    grid = mask.grid
    coords = grid.meshgrid()
    lo = [float(coords[k][mask.inside].min()) for k in range(grid.dim)]
    hi = [float(coords[k][mask.inside].max()) for k in range(grid.dim)]
    diam = mask.node_diameter()
    radius = diam / 8.0
    if grid.dim == 1:
        centers = [(c,) for c in np.linspace(lo[0] + radius, hi[0] - radius, BUMP_COUNT)]
    else:
        xs = np.linspace(lo[0] + radius, hi[0] - radius, 3)
        ys = np.linspace(lo[1] + radius, hi[1] - radius, 2)
        centers = [(x, y) for y in ys for x in xs]
    return [compact_bump(grid, c, radius, 1.0) for c in centers]


@dataclass
class SweepReport:
    """Per-order diagnostics of an s-sweep against the classical limit."""

    s_values: list[float]
    grad_errors: list[float]
    pairings_gt: np.ndarray
    pairings_lt: np.ndarray
    interphase_measures: list[float]
    strong_phase_errors: list[float] | None
    battery_version: int = BUMP_BATTERY_VERSION

    def pairing_gaps(self) -> np.ndarray:
        """|pairing(s) - pairing(1)| for both carrier families, per s and bump."""
        g_gt = np.abs(self.pairings_gt - self.pairings_gt[-1])
        g_lt = np.abs(self.pairings_lt - self.pairings_lt[-1])
        return np.maximum(g_gt, g_lt)


@dataclass
class VPerturbationReport:
    """Gradient errors and pairing gaps along a converging level-set sequence."""

    grad_errors: list[float]
    pairing_gaps: np.ndarray
    noise_floor: float


def _phase_pairings(chi: GridFunction, bumps: Sequence[GridFunction],
                    mask: OmegaMask) -> np.ndarray:
    return np.array([
        integrate(chi.values * b.values, chi.grid, "omega", mask) for b in bumps
    ])


def _solve_many(tasks: list[tuple], solve_one: Callable):
    workers = worker_count()
    if workers > 1 and len(tasks) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(solve_one, tasks))
    return [solve_one(t) for t in tasks]


def s_sweep(data_family: Callable[[float], ProblemData], s_list: Sequence[float],
            reg: RegularizationParams, config: SolverConfig,
            r: float = 2.0,
            interphase_fraction: float = INTERPHASE_FRACTION) -> SweepReport:
    """Solve the family along increasing s (ending at 1) and compare limits.

    Gradient errors are ``||D^s u_s - D u_1||_p`` against the classical
    solve; carrier pairings use the fixed bump battery.  When the inter-phase
    band of the limit problem is negligible, hard-indicator distances in
    L^r are also reported.
    """
    s_list = [float(s) for s in s_list]
    if any(b <= a for a, b in zip(s_list, s_list[1:])):
        raise ValidationError("s_list must be strictly increasing")
    if s_list[-1] != 1.0:
        raise ValidationError("s_list must end at s = 1")

    partial: list[tuple[float, Solution]] = []

    def solve_one(s):
        return solve_two_phase(data_family(s), reg, config)

    try:
        solutions = _solve_many(s_list, solve_one)
    except NonConvergenceError as err:
        err.partial_report = partial
        raise
    partial.extend(zip(s_list, solutions))
    return assemble_sweep_report(s_list, solutions, r=r,
                                 interphase_fraction=interphase_fraction)


def assemble_sweep_report(s_list: Sequence[float], solutions: Sequence[Solution],
                          r: float = 2.0,
                          interphase_fraction: float = INTERPHASE_FRACTION
                          ) -> SweepReport:
    """Build the sweep diagnostics from already-computed per-s solutions."""
    sol1 = solutions[-1]
    grid = sol1.u.grid
    mask = _mask_of(sol1)
    bumps = battery_bumps(mask)
    plan1 = plan_for(grid, 1.0)
    g1 = plan1.gradient_arrays(sol1.u.values)

    grad_errors = []
    pair_gt = []
    pair_lt = []
    measures = []
    for s, sol in zip(s_list, solutions):
        gs = plan_for(grid, s).gradient_arrays(sol.u.values)
        p = _p_of(sol)
        grad_errors.append(vector_lp_norm_arrays(
            [a - b for a, b in zip(gs, g1)], grid, p))
        pair_gt.append(_phase_pairings(sol.chi_gt, bumps, mask))
        pair_lt.append(_phase_pairings(sol.chi_lt, bumps, mask))
        measures.append(sol.diagnostics["interphase_measure"])

    strong = None
    if measures[-1] <= interphase_fraction * mask.measure:
        v1 = sol1.v.values
        hard_gt = ((sol1.u.values > v1) & mask.inside).astype(float)
        hard_lt = ((sol1.u.values < v1) & mask.inside).astype(float)
        strong = []
        for sol in solutions:
            e_gt = lp_norm_values(sol.chi_gt.values - hard_gt, grid, r, "omega", mask)
            e_lt = lp_norm_values(sol.chi_lt.values - hard_lt, grid, r, "omega", mask)
            strong.append(max(e_gt, e_lt))

    return SweepReport(
        s_values=list(s_list),
        grad_errors=grad_errors,
        pairings_gt=np.array(pair_gt),
        pairings_lt=np.array(pair_lt),
        interphase_measures=measures,
        strong_phase_errors=strong,
    )


def _mask_of(sol: Solution) -> OmegaMask:
    mask = sol.diagnostics.get("mask")
    if mask is None:
        raise ValidationError("solution diagnostics carry no mask")
    return mask


def _p_of(sol: Solution) -> float:
    return sol.diagnostics.get("p", 2.0)


def v_perturbation_study(data: ProblemData, v_list: Sequence[GridFunction],
                         reg: RegularizationParams, config: SolverConfig
                         ) -> VPerturbationReport:
    """Solve with each perturbed level set and report gradient errors.

    The errors ``||D^s (u_n - u)||_p`` should be nonincreasing beyond the
    noise floor (ten times the solver stopping threshold) when
    ``||v_n - v|| -> 0``.
    """
    base = solve_two_phase(data, reg, config)
    mask = data.mask
    bumps = battery_bumps(mask)
    plan = plan_for(data.grid, data.s)
    g_base = plan.gradient_arrays(base.u.values)
    pair_base = np.stack([_phase_pairings(base.chi_gt, bumps, mask),
                          _phase_pairings(base.chi_lt, bumps, mask)])

    def solve_one(v_n):
        return solve_two_phase(data.with_v(v_n), reg, config, warm_start=base.u)

    solutions = _solve_many(list(v_list), solve_one)

    errors = []
    gaps = []
    for sol in solutions:
        g_n = plan.gradient_arrays(sol.u.values)
        errors.append(vector_lp_norm_arrays(
            [a - b for a, b in zip(g_n, g_base)], data.grid, data.p))
        pair_n = np.stack([_phase_pairings(sol.chi_gt, bumps, mask),
                           _phase_pairings(sol.chi_lt, bumps, mask)])
        gaps.append(np.abs(pair_n - pair_base).max(axis=0))

    return VPerturbationReport(
        grad_errors=errors,
        pairing_gaps=np.array(gaps),
        noise_floor=10.0 * residual_tolerance(data, config),
    )


def characteristic_convergence_check(solutions: Sequence[Solution],
                                     limit: Solution, r: float,
                                     interphase_fraction: float = INTERPHASE_FRACTION
                                     ) -> list[float]:
    """L^r distances of hard-thresholded phase indicators to the limit phases.

    Refuses when the limit problem's inter-phase band is not negligible;
    without that nondegeneracy only weak-* convergence is available and a
    hard-indicator distance carries no information.
    """
    mask = _mask_of(limit)
    measure = limit.diagnostics["interphase_measure"]
    if measure > interphase_fraction * mask.measure:
        raise InterphaseNotNegligibleError(
            f"limit inter-phase band has measure {measure:.3e} "
            f"(> {interphase_fraction:.0%} of |Omega| = {mask.measure:.3e}); "
            "strong phase convergence is not available in this regime"
        )
    grid = limit.u.grid
    v1 = limit.v.values
    hard_gt = ((limit.u.values > v1) & mask.inside).astype(float)
    hard_lt = ((limit.u.values < v1) & mask.inside).astype(float)
    out = []
    for sol in solutions:
        vs = sol.v.values
        s_gt = ((sol.u.values > vs) & mask.inside).astype(float)
        s_lt = ((sol.u.values < vs) & mask.inside).astype(float)
        d_gt = lp_norm_values(s_gt - hard_gt, grid, r, "omega", mask)
        d_lt = lp_norm_values(s_lt - hard_lt, grid, r, "omega", mask)
        out.append(max(d_gt, d_lt))
    return out
