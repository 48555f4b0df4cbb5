"""Riesz fractional gradient, divergence, and the fractional p-Laplacian.

The fractional gradient of order ``s`` acts in frequency space through the
componentwise multiplier

    m_j(xi) = (2 pi i xi_j) |2 pi xi|^(s-1),

which composes the classical gradient with a Riesz potential of order
``1 - s`` and reduces to the plain spectral derivative ``2 pi i xi_j`` at
``s = 1``.  The multiplier is set to zero at the zero frequency (where the
formula is singular) and at each component's own-axis Nyquist frequency,
which keeps the output of every apply exactly real and makes the discrete
divergence the exact negative adjoint of the discrete gradient.

The fields are assumed zero-extended into the padded box; periodization of
the box is a documented discretization choice, not part of the continuum
operator.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .errors import InvalidExponentError, InvalidOrderError
from .grid import (
    BoxGrid,
    GridFunction,
    VectorField,
    integrate,
    vector_field,
)

# Smoothing applied to |D^s u|^(p-2) for 1 < p < 2 only, inside the nonlinear
# apply; the pure p >= 2 path uses the exact power.
DEGENERACY_SMOOTHING = 1e-12

_REALITY_TOL = 1e-10


@dataclass(frozen=True)
class FractionalOrder:
    """Order s of the fractional gradient; s = 1 is the classical gradient."""

    s: float

    def __post_init__(self):
        object.__setattr__(self, "s", float(self.s))
        if not (0.0 < self.s <= 1.0):
            raise InvalidOrderError(f"fractional order must lie in (0, 1], got {self.s}")


def _order(s) -> float:
    if isinstance(s, FractionalOrder):
        return s.s
    return FractionalOrder(float(s)).s


class SpectralPlan:
    """Cached frequency-domain multipliers of one grid and one order.

    Construction is not thread-safe; a constructed plan is immutable and may
    be shared.  ``gradient_multipliers[j]`` carries the componentwise
    gradient symbol, ``laplacian_multiplier`` the symbol of ``-D^s . D^s``
    (equal to ``|2 pi xi|^(2s)`` away from the Nyquist planes).
    """

    def __init__(self, grid: BoxGrid, s: float):
        self.grid = grid
        self.s = _order(s)
        freqs = [np.fft.fftfreq(grid.n[k], d=grid.h[k]) for k in range(grid.dim)]
        mesh = np.meshgrid(*freqs, indexing="ij")
        two_pi = [2.0 * np.pi * xi for xi in mesh]
        mag = np.sqrt(sum(t ** 2 for t in two_pi))
        if self.s == 1.0:
            radial = np.ones_like(mag)
        else:
            radial = np.zeros_like(mag)
            nz = mag > 0.0
            radial[nz] = mag[nz] ** (self.s - 1.0)
        mults = []
        for j in range(grid.dim):
            m = 1j * two_pi[j] * radial
            # own-axis Nyquist bins are their own conjugate partners; a purely
            # imaginary multiplier there would break the reality of the output
            idx = [slice(None)] * grid.dim
            idx[j] = grid.n[j] // 2
            m[tuple(idx)] = 0.0
            m.setflags(write=False)
            mults.append(m)
        self.gradient_multipliers = tuple(mults)
        lap = sum(np.abs(m) ** 2 for m in mults)
        lap.setflags(write=False)
        self.laplacian_multiplier = lap

    # -- raw-array kernels used by the solver loops ------------------------

    def gradient_arrays(self, values: np.ndarray) -> list[np.ndarray]:
        u_hat = np.fft.fftn(values)
        return [self._to_real(np.fft.ifftn(m * u_hat), values)
                for m in self.gradient_multipliers]

    def divergence_arrays(self, comps) -> np.ndarray:
        out = np.zeros(self.grid.shape)
        for m, c in zip(self.gradient_multipliers, comps):
            out += self._to_real(np.fft.ifftn(m * np.fft.fftn(c)), c)
        return out

    @staticmethod
    def _to_real(z: np.ndarray, ref: np.ndarray) -> np.ndarray:
        scale = float(np.max(np.abs(z))) + float(np.max(np.abs(ref))) + 1e-300
        residue = float(np.max(np.abs(z.imag))) / scale
        if residue > _REALITY_TOL:
            raise FloatingPointError(
                f"spectral apply produced relative imaginary residue {residue:.3e}"
            )
        return np.ascontiguousarray(z.real)


@lru_cache(maxsize=64)
def plan_for(grid: BoxGrid, s: float) -> SpectralPlan:
    """Shared plan cache keyed by grid geometry and order."""
    return SpectralPlan(grid, s)


def riesz_gradient(u: GridFunction, s) -> VectorField:
    """Fractional gradient D^s u as a d-component field on the same grid."""
    plan = plan_for(u.grid, _order(s))
    return vector_field(u.grid, plan.gradient_arrays(u.values))


def riesz_divergence(F: VectorField, s) -> GridFunction:
    """Fractional divergence, the exact negative adjoint of the gradient.

    For all grid functions u, ``<D^s u, F> = -<u, D^s . F>`` up to roundoff.
    """
    plan = plan_for(F.grid, _order(s))
    return GridFunction(F.grid, plan.divergence_arrays(F.arrays()))


def p_flux_arrays(grads, p: float):
    """Nonlinear flux ``|g|^(p-2) g`` evaluated nodewise on gradient arrays."""
    p = float(p)
    if p <= 1.0 or not math.isfinite(p):
        raise InvalidExponentError(f"exponent p must be finite and > 1, got {p}")
    if p == 2.0:
        return [np.array(g) for g in grads]
    mag2 = sum(g ** 2 for g in grads)
    if p > 2.0:
        w = mag2 ** ((p - 2.0) / 2.0)
    else:
        w = (mag2 + DEGENERACY_SMOOTHING ** 2) ** ((p - 2.0) / 2.0)
    return [w * g for g in grads]


def minus_p_laplacian_arrays(plan: SpectralPlan, values: np.ndarray, p: float) -> np.ndarray:
    """Raw-array evaluation of ``-D^s . (|D^s u|^(p-2) D^s u)``."""
    grads = plan.gradient_arrays(values)
    flux = p_flux_arrays(grads, p)
    return -plan.divergence_arrays(flux)


def fractional_p_laplacian_apply(u: GridFunction, s, p: float) -> GridFunction:
    """Apply ``-Delta^s_p``, i.e. ``-D^s . (|D^s u|^(p-2) D^s u)``.

    For p = 2 this is the Fourier multiplier ``|2 pi xi|^(2s)`` acting on
    ``u`` (with the plan's Nyquist convention).
    """
    plan = plan_for(u.grid, _order(s))
    return GridFunction(u.grid, minus_p_laplacian_arrays(plan, u.values, p))


def monotonicity_gap(u: GridFunction, w: GridFunction, s: float, t: float,
                     p: float) -> tuple[float, float]:
    """Strong-monotonicity gap of the p-flux between two states.

    Returns ``(lhs, rhs)`` where ``lhs`` integrates
    ``(|D^s u|^(p-2) D^s u - |D^t w|^(p-2) D^t w) . (D^s u - D^t w)`` over
    the box and ``rhs`` is the lower bound ``alpha_p ||D^s u - D^t w||_p^p``
    for p >= 2 (``alpha_p = 2^(2-p)``) or
    ``alpha_p ||.||_p^2 / (||D^s u||_p + ||D^t w||_p)^(2-p)`` for p <= 2
    (``alpha_p = p - 1``).
    """
    p = float(p)
    if p <= 1.0 or not math.isfinite(p):
        raise InvalidExponentError(f"exponent p must be finite and > 1, got {p}")
    if u.grid != w.grid:
        from .errors import GridMismatchError

        raise GridMismatchError("monotonicity gap needs both fields on one grid")
    gu = plan_for(u.grid, _order(s)).gradient_arrays(u.values)
    gw = plan_for(w.grid, _order(t)).gradient_arrays(w.values)

    def flux_exact(gs):
        mag = np.sqrt(sum(g ** 2 for g in gs))
        with np.errstate(divide="ignore", invalid="ignore"):
            wgt = np.where(mag > 0.0, mag ** (p - 2.0), 0.0)
        return [wgt * g for g in gs]

    fu, fw = flux_exact(gu), flux_exact(gw)
    integrand = sum((a - b) * (x - y) for a, b, x, y in zip(fu, fw, gu, gw))
    lhs = integrate(integrand, u.grid, "box")

    diff_mag = np.sqrt(sum((x - y) ** 2 for x, y in zip(gu, gw)))
    norm_diff = integrate(diff_mag ** p, u.grid, "box") ** (1.0 / p)
    if p >= 2.0:
        rhs = 2.0 ** (2.0 - p) * norm_diff ** p
    else:
        nu = integrate(np.sqrt(sum(g ** 2 for g in gu)) ** p, u.grid, "box") ** (1.0 / p)
        nw = integrate(np.sqrt(sum(g ** 2 for g in gw)) ** p, w.grid, "box") ** (1.0 / p)
        denom = (nu + nw) ** (2.0 - p)
        rhs = 0.0 if denom == 0.0 else (p - 1.0) * norm_diff ** 2 / denom
    return float(lhs), float(rhs)
