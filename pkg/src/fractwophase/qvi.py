"""Implicit level-set operators and the quasi-variational fixed-point driver.

The implicit two-phase problem couples the level set to the solution through
a continuous map Phi; existence comes from compactness, not contraction, so
the damped Picard iteration here is a search procedure whose non-convergence
is a reported outcome (with full residual history), never a claim that no
fixed point exists.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .energy import ProblemData, RegularizationParams
from .errors import (
    AprioriBoundViolationError,
    FixedPointNonConvergenceError,
    ValidationError,
)
from .fractional import plan_for
from .grid import (
    GridFunction,
    OmegaMask,
    compact_bump,
    integrate,
    l2_norm_values,
    lp_norm_values,
    vector_lp_norm_arrays,
)
from .limits import SweepReport, assemble_sweep_report
from .solver import (
    Solution,
    SolverConfig,
    solve_regularized,
    solve_two_phase,
)


def truncate(values: np.ndarray, g_minus: np.ndarray, g_plus: np.ndarray) -> np.ndarray:
    """Two-sided clamp ``max(g-, min(w, g+))`` nodewise; nonexpansive in L^2."""
    return np.maximum(g_minus, np.minimum(values, g_plus))


class PhiOperator:
    """Base of the implicit level-set maps u -> Phi(u)."""

    def apply(self, u: GridFunction) -> GridFunction:
        raise NotImplementedError

    def validate(self) -> None:
        """Check the operator's growth/bound hypotheses on a sample grid."""


# -- Nemytskii ---------------------------------------------------------------

def _nemytskii_scaled_clamp(params):
    a, lo, hi = params

    def fn(x_coords, w):
        return a * np.clip(w, lo, hi)

    return fn


def _nemytskii_constant(params):
    (c,) = params

    def fn(x_coords, w):
        return np.full_like(np.asarray(w, dtype=float), c)

    return fn


def _nemytskii_affine(params):
    a, b = params

    def fn(x_coords, w):
        return a * np.asarray(w, dtype=float) + b

    return fn


NEMYTSKII_BUILTINS: dict[str, Callable] = {
    "scaled_clamp": _nemytskii_scaled_clamp,
    "constant": _nemytskii_constant,
    "affine": _nemytskii_affine,
}


@dataclass
class NemytskiiPhi(PhiOperator):
    """Pointwise map ``Phi(u)(x) = phi(x, u(x))`` with at most affine growth.

    ``phi0`` and ``c1`` are the growth-bound data ``|phi(x, w)| <= phi0(x) +
    c1 |w|``, verified by sampling at validation time.
    """

    mask: OmegaMask
    func_name: str
    params: tuple
    phi0: GridFunction
    c1: float
    w_probe_max: float = 10.0

    def __post_init__(self):
        if self.func_name not in NEMYTSKII_BUILTINS:
            raise ValidationError(
                f"unknown Nemytskii builtin {self.func_name!r}; "
                f"known: {sorted(NEMYTSKII_BUILTINS)}"
            )
        self.params = tuple(float(x) for x in self.params)
        self._fn = NEMYTSKII_BUILTINS[self.func_name](self.params)
        if self.c1 < 0.0:
            raise ValidationError("growth constant c1 must be >= 0")
        if (self.phi0.values[self.mask.inside] < 0.0).any():
            raise ValidationError("growth bound phi0 must be >= 0")
        self.validate()

    def validate(self):
        coords = self.mask.grid.meshgrid()
        for w in np.linspace(-self.w_probe_max, self.w_probe_max, 41):
            img = np.abs(self._fn(coords, np.full(self.mask.grid.shape, w)))
            bound = self.phi0.values + self.c1 * abs(w)
            bad = img[self.mask.inside] > bound[self.mask.inside] + 1e-12
            if bad.any():
                raise ValidationError(
                    f"Nemytskii map violates its affine growth bound at w = {w:.3g}"
                )

    def apply(self, u: GridFunction) -> GridFunction:
        vals = self._fn(u.grid.meshgrid(), u.values)
        return GridFunction(u.grid, np.where(self.mask.inside, vals, 0.0), True)


# -- Uryson ------------------------------------------------------------------

def _uryson_kernel_uniform(grid, mask, params):
    (c,) = params
    return lambda x_pts: np.full((len(x_pts), int(mask.inside.sum())), c)


def _uryson_kernel_gaussian(grid, mask, params):
    amp, width = params
    coords = grid.meshgrid()
    src = np.stack([coords[k][mask.inside] for k in range(grid.dim)], axis=1)

    def kern(x_pts):
        r2 = ((x_pts[:, None, :] - src[None, :, :]) ** 2).sum(axis=2)
        return amp * np.exp(-r2 / (2.0 * width ** 2))

    return kern


URYSON_KERNELS = {
    "uniform": _uryson_kernel_uniform,
    "gaussian": _uryson_kernel_gaussian,
}

URYSON_VALUE_MAPS = {
    "identity": lambda params: (lambda w: w),
    "clamp": lambda params: (lambda w: np.clip(w, params[0], params[1])),
}


@dataclass
class UrysonPhi(PhiOperator):
    """Separable integral map ``Phi(u)(x) = int_Omega k(x, y) g(u(y)) dy``.

    Restricted to separable builtin kernels; the bound
    ``|k(x, y) g(w)| <= phi_bound + c |w|`` is probed by sampling.
    """

    mask: OmegaMask
    kernel_name: str
    kernel_params: tuple
    value_map_name: str = "identity"
    value_map_params: tuple = ()
    phi_bound: float = 0.0
    c_bound: float | None = None
    w_probe_max: float = 10.0

    def __post_init__(self):
        if self.kernel_name not in URYSON_KERNELS:
            raise ValidationError(f"unknown Uryson kernel {self.kernel_name!r}")
        if self.value_map_name not in URYSON_VALUE_MAPS:
            raise ValidationError(f"unknown Uryson value map {self.value_map_name!r}")
        self.kernel_params = tuple(float(x) for x in self.kernel_params)
        self.value_map_params = tuple(float(x) for x in self.value_map_params)
        grid = self.mask.grid
        self._kernel = URYSON_KERNELS[self.kernel_name](grid, self.mask, self.kernel_params)
        self._gmap = URYSON_VALUE_MAPS[self.value_map_name](self.value_map_params)
        if self.c_bound is None:
            peak = self._kernel_peak()
            self.c_bound = peak
        self.validate()

    def _kernel_peak(self) -> float:
        pts = self._probe_points()
        return float(np.abs(self._kernel(pts)).max())

    def _probe_points(self) -> np.ndarray:
        grid = self.mask.grid
        coords = grid.meshgrid()
        pts = np.stack([coords[k][self.mask.inside] for k in range(grid.dim)], axis=1)
        stride = max(1, len(pts) // 64)
        return pts[::stride]

    def validate(self):
        kern = np.abs(self._kernel(self._probe_points()))
        for w in np.linspace(-self.w_probe_max, self.w_probe_max, 17):
            tau = kern * abs(float(np.asarray(self._gmap(w))))
            if (tau > self.phi_bound + self.c_bound * abs(w) + 1e-12).any():
                raise ValidationError(
                    f"Uryson kernel violates its growth bound at w = {w:.3g}"
                )

    def apply(self, u: GridFunction) -> GridFunction:
        grid = u.grid
        coords = grid.meshgrid()
        pts = np.stack([c.ravel() for c in coords], axis=1)
        gu = np.asarray(self._gmap(u.values[self.mask.inside]), dtype=float)
        cell = grid.cell_volume
        out = np.empty(grid.num_nodes)
        chunk = 4096
        for start in range(0, len(pts), chunk):
            out[start:start + chunk] = self._kernel(pts[start:start + chunk]) @ gu * cell
        vals = out.reshape(grid.shape)
        return GridFunction(grid, np.where(self.mask.inside, vals, 0.0), True)


# -- Affine reflection --------------------------------------------------------

@dataclass
class AffineReflectionPhi(PhiOperator):
    """Reflection ``w -> 2w - v0`` through a fixed level set v0.

    A fixed point of the induced implicit problem satisfies the role-swapped
    two-phase system with respect to v0 itself (comparison signs flipped).
    """

    mask: OmegaMask
    v0: GridFunction

    def __post_init__(self):
        if self.v0.grid != self.mask.grid:
            raise ValidationError("reflection level set must share the grid")

    def apply(self, u: GridFunction) -> GridFunction:
        vals = 2.0 * u.values - self.v0.values
        return GridFunction(u.grid, np.where(self.mask.inside, vals, 0.0), True)


# -- Coupled membrane ---------------------------------------------------------

@dataclass
class CoupledMembranePhi(PhiOperator):
    """Level set produced by an auxiliary Dirichlet solve.

    ``Phi(u)`` solves ``-Delta^t_p w = T(u)`` with the two-sided truncation
    ``T(u) = max(g-, min(u, g+))`` as source, at order ``t >= s`` of the
    outer problem and with no phase terms.
    """

    mask: OmegaMask
    t: float
    p: float
    g_minus: GridFunction
    g_plus: GridFunction
    inner_config: SolverConfig = field(default_factory=lambda: SolverConfig(grad_tol=1e-8))

    def __post_init__(self):
        if not 0.0 < self.t <= 1.0:
            raise ValidationError("membrane order t must lie in (0, 1]")
        grid = self.mask.grid
        if self.g_minus.grid != grid or self.g_plus.grid != grid:
            raise ValidationError("truncation bounds must share the grid")
        gm = self.g_minus.values[self.mask.inside]
        gp = self.g_plus.values[self.mask.inside]
        if (gm > gp).any():
            raise ValidationError("truncation needs g- <= g+ nodewise")
        # warm start for the inner solve; makes apply stateful but only as a
        # cache, consistent with the sequential outer loop
        self._last: GridFunction | None = None

    def apply(self, u: GridFunction) -> GridFunction:
        grid = self.mask.grid
        src = truncate(u.values, self.g_minus.values, self.g_plus.values)
        zero = GridFunction(grid, np.zeros(grid.shape), True)
        data = ProblemData(
            grid=grid, mask=self.mask, p=self.p, s=self.t,
            f=GridFunction(grid, np.where(self.mask.inside, src, 0.0), True),
            lambda_plus=zero, lambda_minus=zero, v=zero, q=2.0,
        )
        # no phase terms, so the regularization parameter is inert
        out = solve_regularized(data, 1.0, self.inner_config, warm_start=self._last)
        self._last = out
        return out


def apply_phi(op: PhiOperator, u: GridFunction) -> GridFunction:
    """Evaluate the implicit level-set map on a state."""
    return op.apply(u)


# -- Fixed-point driver --------------------------------------------------------

@dataclass(frozen=True)
class FixedPointConfig:
    """Damped Picard iteration knobs for the implicit problem."""

    theta: float = 0.5
    max_outer: int = 30
    fp_tol: float = 1e-5
    inner: SolverConfig = field(default_factory=SolverConfig)
    reg: RegularizationParams = field(default_factory=RegularizationParams)

    def __post_init__(self):
        if not 0.0 < self.theta <= 1.0:
            raise ValidationError("damping theta must lie in (0, 1]")
        if not self.fp_tol > 0.0:
            raise ValidationError("fp_tol must be positive")
        if not self.max_outer >= 1:
            raise ValidationError("max_outer must be >= 1")


APRIORI_SAFETY = 10.0


def _embedding_constant(data: ProblemData) -> float:
    """Fitted discrete constant of ``||w||_{q'} <= C ||D^s w||_p`` on probes."""
    grid, mask = data.grid, data.mask
    rng = np.random.default_rng(0)
    diam = mask.node_diameter()
    coords = grid.meshgrid()
    center = tuple(float(coords[k][mask.inside].mean()) for k in range(grid.dim))
    probes = [
        compact_bump(grid, center, diam / 4.0, 1.0, mask),
        compact_bump(grid, center, diam / 8.0, 1.0, mask),
        GridFunction(grid, np.where(mask.inside, rng.standard_normal(grid.shape), 0.0), True),
    ]
    plan = plan_for(grid, data.s)
    q_eff = max(data.q_prime, 1.0 + 1e-6)
    best = 0.0
    for w in probes:
        num = lp_norm_values(w.values, grid, q_eff, "omega", mask)
        den = vector_lp_norm_arrays(plan.gradient_arrays(w.values), grid, data.p)
        if den > 0.0:
            best = max(best, num / den)
    return best


def apriori_radius(data: ProblemData) -> float:
    """Radius of the invariant ball of the implicit problem's solution map.

    Uses the estimate ``||u_v||_{q'} <= C' (C ||f| + lam+ + lam-||_{p#})^{1/(p-1)}``
    with the embedding constant fitted on the grid and a fixed safety factor;
    a violation by an iterate indicates a solver bug, not a math failure.
    """
    c_emb = _embedding_constant(data)
    p_sharp_eff = max(data.p_sharp, 1.0 + 1e-6)
    combined = (np.abs(data.f.values) + data.lambda_plus.values
                + data.lambda_minus.values)
    norm = lp_norm_values(combined, data.grid, p_sharp_eff, "omega", data.mask)
    return APRIORI_SAFETY * c_emb * max(c_emb * norm, 1e-300) ** (1.0 / (data.p - 1.0))


def solve_qvi(data: ProblemData, op: PhiOperator, fp: FixedPointConfig
              ) -> tuple[Solution, list[float]]:
    """Damped Picard iteration ``u <- (1-theta) u + theta S(Phi(u))``.

    On success the returned solution is the two-phase solve at the fixed
    level set ``v = Phi(u_K)``, so its sandwich invariants hold with respect
    to that v.  Raises :class:`FixedPointNonConvergenceError` with the full
    residual history when the budget runs out.
    """
    grid, mask = data.grid, data.mask
    u = GridFunction(grid, np.zeros(grid.shape), True)
    radius = apriori_radius(data)
    q_eff = max(data.q_prime, 1.0 + 1e-6)
    history: list[float] = []
    for k in range(fp.max_outer):
        v_k = op.apply(u)
        sol = solve_two_phase(data.with_v(v_k), fp.reg, fp.inner, warm_start=u)
        residual = (l2_norm_values(u.values - sol.u.values, grid)
                    / (1.0 + l2_norm_values(u.values, grid)))
        history.append(residual)
        norm_q = lp_norm_values(sol.u.values, grid, q_eff, "omega", mask)
        if norm_q > radius:
            raise AprioriBoundViolationError(
                f"iterate {k} left the a-priori ball "
                f"(||u||_q' = {norm_q:.3e} > R = {radius:.3e})",
                dump={"outer_iteration": k, "norm": norm_q, "radius": radius,
                      "history": history},
            )
        if residual <= fp.fp_tol:
            sol.diagnostics["outer_iterations"] = k + 1
            sol.diagnostics["fp_history"] = history
            return sol, history
        mixed = (1.0 - fp.theta) * u.values + fp.theta * sol.u.values
        u = GridFunction(grid, np.where(mask.inside, mixed, 0.0), True)
    raise FixedPointNonConvergenceError(history)


def qvi_s_sweep(data_family: Callable[[float], ProblemData], op: PhiOperator,
                s_list, fp: FixedPointConfig, r: float = 2.0) -> SweepReport:
    """Order sweep of the implicit problem with the level set recomputed per s."""
    s_list = [float(s) for s in s_list]
    if any(b <= a for a, b in zip(s_list, s_list[1:])):
        raise ValidationError("s_list must be strictly increasing")
    if s_list[-1] != 1.0:
        raise ValidationError("s_list must end at s = 1")
    solutions = []
    for s in s_list:
        sol, _ = solve_qvi(data_family(s), op, fp)
        solutions.append(sol)
    return assemble_sweep_report(s_list, solutions, r=r)
