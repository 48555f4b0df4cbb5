"""Problem data, exponent bookkeeping, and the two-phase energies.

The two-phase energy of a zero-extended state w is

    J(w) = (1/p) \int_box |D^s w|^p
           + \int_Omega [lam+ (w - v)^+ + lam- (w - v)^-]
           - \int_Omega f w,

with ``t^+ = max(t, 0)`` and ``t^- = max(-t, 0)``.  The gradient term is
integrated over the whole padded box (the computational proxy for the full
space); the data terms see Omega only.  The regularized energy replaces
``t^+`` by the C^1 convex ramp integral ``G_eps`` whose derivative is the
clipped ramp ``H_eps``.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, replace

import numpy as np

from .errors import GridMismatchError, ValidationError
from .fractional import p_flux_arrays, plan_for
from .grid import (
    BoxGrid,
    GridFunction,
    OmegaMask,
    integrate,
    lp_norm_values,
)

#: p_sharp reported for the borderline s*p = d, where only p_sharp > 1 is known.
P_SHARP_BORDERLINE = 1.0 + 1e-6


def sobolev_exponents(p: float, s: float, d: int) -> tuple[float, float]:
    """Critical exponent ``p*_s`` and its conjugate ``p#_s = (p*_s)'``.

    ``p*_s = dp/(d - sp)`` and ``p#_s = dp/(d(p-1) + sp)`` when ``sp < d``;
    for ``sp > d`` every finite exponent embeds, reported as
    ``(inf, 1.0)``.  The borderline ``sp = d`` returns ``(inf,
    1 + 1e-6)`` and warns, since only ``p#_s > 1`` holds there.
    """
    if not (p > 1.0 and math.isfinite(p)):
        raise ValidationError(f"p must be finite and > 1, got {p}")
    if not (0.0 < s <= 1.0):
        raise ValidationError(f"s must lie in (0, 1], got {s}")
    if d not in (1, 2):
        raise ValidationError(f"d must be 1 or 2, got {d}")
    sp = s * p
    if sp < d:
        p_star = d * p / (d - sp)
        p_sharp = d * p / (d * (p - 1.0) + sp)
        return p_star, p_sharp
    if sp > d:
        return math.inf, 1.0
    warnings.warn(
        f"s*p = d = {d}: borderline Sobolev regime, using p_sharp = {P_SHARP_BORDERLINE}",
        stacklevel=2,
    )
    return math.inf, P_SHARP_BORDERLINE


def smoothed_heaviside(t, eps: float):
    """Clipped ramp H_eps: 0 for t <= 0, t/eps on [0, eps], 1 for t >= eps."""
    if not eps > 0.0:
        raise ValidationError(f"eps must be positive, got {eps}")
    return np.clip(np.asarray(t, dtype=float) / eps, 0.0, 1.0)


def smoothed_positive_part(t, eps: float):
    """C^1 convex ramp integral G_eps with derivative ``smoothed_heaviside``.

    0 for t <= 0, t^2/(2 eps) on [0, eps], t - eps/2 beyond; satisfies
    ``G_eps(t) <= t^+ <= G_eps(t) + eps/2``.
    """
    if not eps > 0.0:
        raise ValidationError(f"eps must be positive, got {eps}")
    t = np.asarray(t, dtype=float)
    return np.where(t <= 0.0, 0.0,
                    np.where(t <= eps, t * t / (2.0 * eps), t - eps / 2.0))


@dataclass(frozen=True)
class RegularizationParams:
    """Geometric schedule eps_k = eps0 * ratio^k, k = 0..steps-1."""

    eps0: float = 1.0
    ratio: float = 0.5
    steps: int = 12

    def __post_init__(self):
        if not self.eps0 > 0.0:
            raise ValidationError("eps0 must be positive")
        if not 0.0 < self.ratio < 1.0:
            raise ValidationError("ratio must lie in (0, 1)")
        if not self.steps >= 1:
            raise ValidationError("steps must be >= 1")

    def schedule(self) -> list[float]:
        return [self.eps0 * self.ratio ** k for k in range(self.steps)]

    @property
    def final_eps(self) -> float:
        return self.eps0 * self.ratio ** (self.steps - 1)


@dataclass(frozen=True)
class ProblemData:
    """Data of one two-phase problem on one grid.

    ``v`` may be None for the implicit/two-membrane drivers that supply the
    level set externally; the energy and solver entry points require it.
    All data fields are masked to Omega at construction (their values off
    Omega never enter any integral).
    """

    grid: BoxGrid
    mask: OmegaMask
    p: float
    s: float
    f: GridFunction
    lambda_plus: GridFunction
    lambda_minus: GridFunction
    v: GridFunction | None
    q: float = 2.0

    def __post_init__(self):
        if self.mask.grid != self.grid:
            raise GridMismatchError("mask grid differs from problem grid")
        if not (self.p > 1.0 and math.isfinite(self.p)):
            raise ValidationError(f"p must be finite and > 1, got {self.p}")
        if not (0.0 < self.s <= 1.0):
            raise ValidationError(f"s must lie in (0, 1], got {self.s}")
        fields = {"f": self.f, "lambda_plus": self.lambda_plus,
                  "lambda_minus": self.lambda_minus}
        if self.v is not None:
            fields["v"] = self.v
        for name, fld in fields.items():
            if fld.grid != self.grid:
                raise GridMismatchError(f"{name} lives on a different grid")
        for name in ("lambda_plus", "lambda_minus"):
            vals = getattr(self, name).values[self.mask.inside]
            if (vals < 0.0).any():
                raise ValidationError(
                    f"{name} must be nonnegative on Omega "
                    f"(min value {vals.min():.3e})"
                )
        p_star, p_sharp = sobolev_exponents(self.p, self.s, self.grid.dim)
        q = float(self.q)
        if not q > p_sharp:
            raise ValidationError(
                f"integrability exponent q = {q} must exceed the Sobolev "
                f"conjugate p# = {p_sharp:.6g} for this (p, s, d)"
            )
        q_prime = 1.0 if math.isinf(q) else q / (q - 1.0)
        if not q_prime < p_star:
            raise ValidationError(
                f"conjugate exponent q' = {q_prime:.6g} must stay below the "
                f"critical exponent p* = {p_star:.6g}"
            )
        object.__setattr__(self, "q", q)
        object.__setattr__(self, "p", float(self.p))
        object.__setattr__(self, "s", float(self.s))
        for name, fld in fields.items():
            object.__setattr__(self, name, _masked(fld, self.mask))

    @property
    def p_star(self) -> float:
        return sobolev_exponents(self.p, self.s, self.grid.dim)[0]

    @property
    def p_sharp(self) -> float:
        return sobolev_exponents(self.p, self.s, self.grid.dim)[1]

    @property
    def q_prime(self) -> float:
        return 1.0 if math.isinf(self.q) else self.q / (self.q - 1.0)

    def with_v(self, v: GridFunction) -> "ProblemData":
        return replace(self, v=v)

    def with_s(self, s: float) -> "ProblemData":
        return replace(self, s=s)

    def require_v(self) -> GridFunction:
        if self.v is None:
            raise ValidationError("this operation needs the level-set field v")
        return self.v


def _masked(u: GridFunction, mask: OmegaMask) -> GridFunction:
    return GridFunction(u.grid, np.where(mask.inside, u.values, 0.0), True)


def _gradient_term(values: np.ndarray, data: ProblemData) -> float:
    plan = plan_for(data.grid, data.s)
    grads = plan.gradient_arrays(values)
    mag_p = np.sqrt(sum(g ** 2 for g in grads)) ** data.p
    return integrate(mag_p, data.grid, "box") / data.p


def energy(u: GridFunction, data: ProblemData) -> float:
    """Two-phase energy J(u); gradient over the box, data terms over Omega."""
    if u.grid != data.grid:
        raise GridMismatchError("state and data grids differ")
    v = data.require_v()
    d = u.values - v.values
    lam = (data.lambda_plus.values * np.maximum(d, 0.0)
           + data.lambda_minus.values * np.maximum(-d, 0.0))
    val = _gradient_term(u.values, data)
    val += integrate(lam, data.grid, "omega", data.mask)
    val -= integrate(data.f.values * u.values, data.grid, "omega", data.mask)
    return float(val)


def energy_regularized(u: GridFunction, data: ProblemData, eps: float) -> float:
    """Regularized energy with ``(.)^+`` replaced by ``G_eps``.

    Satisfies ``J_eps(u) <= J(u) <= J_eps(u) + (eps/2)(||lam+||_1 + ||lam-||_1)``.
    """
    if u.grid != data.grid:
        raise GridMismatchError("state and data grids differ")
    v = data.require_v()
    d = u.values - v.values
    lam = (data.lambda_plus.values * smoothed_positive_part(d, eps)
           + data.lambda_minus.values * smoothed_positive_part(-d, eps))
    val = _gradient_term(u.values, data)
    val += integrate(lam, data.grid, "omega", data.mask)
    val -= integrate(data.f.values * u.values, data.grid, "omega", data.mask)
    return float(val)


def residual_arrays(values: np.ndarray, data: ProblemData, eps: float) -> np.ndarray:
    """Raw-array residual of the regularized problem, masked to Omega."""
    plan = plan_for(data.grid, data.s)
    grads = plan.gradient_arrays(values)
    flux = p_flux_arrays(grads, data.p)
    r = -plan.divergence_arrays(flux)
    v = data.require_v()
    d = values - v.values
    r = (r + data.lambda_plus.values * smoothed_heaviside(d, eps)
         - data.lambda_minus.values * smoothed_heaviside(-d, eps)
         - data.f.values)
    return np.where(data.mask.inside, r, 0.0)


def first_variation(u: GridFunction, data: ProblemData, eps: float) -> GridFunction:
    """Gateaux derivative of the regularized energy along zero-extended directions.

    Returns ``-Delta^s_p u + lam+ H_eps(u - v) - lam- H_eps(v - u) - f``
    restricted to Omega; for any zero-extended w,
    ``<first_variation(u), w> = d/dtau J_eps(u + tau w)``.
    """
    if not eps > 0.0:
        raise ValidationError(f"eps must be positive, got {eps}")
    if u.grid != data.grid:
        raise GridMismatchError("state and data grids differ")
    return GridFunction(data.grid, residual_arrays(u.values, data, eps), True)


def zeta_from_state(u: GridFunction, data: ProblemData, eps: float
                    ) -> tuple[GridFunction, GridFunction, GridFunction]:
    """Multiplier and quasi-characteristic carriers at regularization eps.

    ``zeta = lam+ H_eps(u - v) - lam- H_eps(v - u)`` satisfies
    ``-lam- <= zeta <= lam+`` nodewise; the carriers ``chi = H_eps(+-(u - v))``
    take values in [0, 1] and have disjoint supports.
    """
    if not eps > 0.0:
        raise ValidationError(f"eps must be positive, got {eps}")
    if u.grid != data.grid:
        raise GridMismatchError("state and data grids differ")
    v = data.require_v()
    d = u.values - v.values
    inside = data.mask.inside
    chi_gt = np.where(inside, smoothed_heaviside(d, eps), 0.0)
    chi_lt = np.where(inside, smoothed_heaviside(-d, eps), 0.0)
    zeta = data.lambda_plus.values * chi_gt - data.lambda_minus.values * chi_lt
    g = data.grid
    return (GridFunction(g, zeta, True),
            GridFunction(g, chi_gt, True),
            GridFunction(g, chi_lt, True))


def data_norm_scale(data: ProblemData) -> float:
    """Scale ``1 + ||f||_2 + ||lam+||_2 + ||lam-||_2`` used by stopping rules."""
    return 1.0 + sum(
        lp_norm_values(x.values, data.grid, 2.0, "omega", data.mask)
        for x in (data.f, data.lambda_plus, data.lambda_minus)
    )
