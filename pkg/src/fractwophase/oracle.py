"""Dense quadrature oracle for the fractional gradient.

Independent cross-check of the spectral path: the Riesz potential of order
``1 - s`` is evaluated by direct midpoint quadrature of its kernel

    I_{1-s} u(x) = gamma(d, s) * integral u(y) |x - y|^(1 - s - d) dy,
    gamma(d, s) = Gamma((d - 1 + s)/2) / (pi^(d/2) 2^(1-s) Gamma((1 - s)/2)),

with the singular cell integrated in closed form, and the potential is then
differenced centrally.  No FFT is involved, so agreement with the spectral
operator validates both discretizations.  Intended for tests only; grids are
capped at 256 nodes (1D) and 64 per axis (2D).
"""

from __future__ import annotations

import math

import numpy as np

from .errors import OracleSizeError
from .grid import BoxGrid, GridFunction, VectorField, vector_field

ORACLE_MAX_NODES_1D = 256
ORACLE_MAX_NODES_2D = 64


def riesz_potential_constant(d: int, s: float) -> float:
    """Normalization gamma(d, s) of the order-(1-s) Riesz potential kernel."""
    if not (0.0 < s < 1.0):
        raise ValueError("potential constant defined for 0 < s < 1")
    return math.gamma((d - 1 + s) / 2.0) / (
        math.pi ** (d / 2.0) * 2.0 ** (1.0 - s) * math.gamma((1.0 - s) / 2.0)
    )


def _check_cap(grid: BoxGrid) -> None:
    cap = ORACLE_MAX_NODES_1D if grid.dim == 1 else ORACLE_MAX_NODES_2D
    if max(grid.n) > cap:
        raise OracleSizeError(
            f"dense oracle capped at {cap} nodes per axis in {grid.dim}D, "
            f"got n = {grid.n}"
        )


def _singular_cell_weight(grid: BoxGrid, s: float) -> float:
    """Closed-form integral of |x|^(1 - s - d) over one grid cell at the origin.

    1D: exact on the interval [-h/2, h/2].  2D: the rectangular cell is
    replaced by the disc of equal area, over which the radial integral is
    exact.
    """
    if grid.dim == 1:
        h = grid.h[0]
        return 2.0 * (h / 2.0) ** (1.0 - s) / (1.0 - s)
    cell = grid.cell_volume
    r_eq = math.sqrt(cell / math.pi)
    return 2.0 * math.pi * r_eq ** (1.0 - s) / (1.0 - s)


def _potential_1d(grid: BoxGrid, values: np.ndarray, s: float, xe: np.ndarray) -> np.ndarray:
    """Riesz potential at evaluation points xe (free space)."""
    c = riesz_potential_constant(1, s)
    h = grid.h[0]
    x = grid.axis(0)
    r = np.abs(xe[:, None] - x[None, :])
    with np.errstate(divide="ignore"):
        kern = np.where(r > 0.0, r ** (-s), 0.0)
    w = c * h * (kern @ values)
    sing = c * _singular_cell_weight(grid, s)
    hits = r < 0.5 * h * 1e-9
    if hits.any():
        ii, jj = np.nonzero(hits)
        w[ii] += values[jj] * sing
    return w


def _potential_2d(grid: BoxGrid, values: np.ndarray, s: float, pts: np.ndarray) -> np.ndarray:
    c = riesz_potential_constant(2, s)
    cell = grid.cell_volume
    xs, ys = grid.meshgrid()
    src = np.stack([xs.ravel(), ys.ravel()], axis=1)
    vals = values.ravel()
    sing = c * _singular_cell_weight(grid, s)
    tol = 0.5 * min(grid.h) * 1e-9
    out = np.empty(len(pts))
    chunk = 2048
    for start in range(0, len(pts), chunk):
        block = pts[start:start + chunk]
        r = np.sqrt(((block[:, None, :] - src[None, :, :]) ** 2).sum(axis=2))
        with np.errstate(divide="ignore"):
            kern = np.where(r > tol, r ** (-1.0 - s), 0.0)
        w = c * cell * (kern @ vals)
        hits = r <= tol
        if hits.any():
            ii, jj = np.nonzero(hits)
            w[ii] += vals[jj] * sing
        out[start:start + chunk] = w
    return out


def dense_oracle_gradient(u: GridFunction, s) -> VectorField:
    """Fractional gradient via kernel quadrature plus central differencing.

    At ``s = 1`` this reduces to central differencing of ``u`` itself (with
    zero ghost values, consistent with compact support).
    """
    from .fractional import _order

    s = _order(s)
    grid = u.grid
    _check_cap(grid)

    if s == 1.0:
        if grid.dim == 1:
            w = np.pad(u.values, 1)
            return vector_field(grid, [(w[2:] - w[:-2]) / (2.0 * grid.h[0])])
        wx = np.pad(u.values, ((1, 1), (0, 0)))
        wy = np.pad(u.values, ((0, 0), (1, 1)))
        gx = (wx[2:, :] - wx[:-2, :]) / (2.0 * grid.h[0])
        gy = (wy[:, 2:] - wy[:, :-2]) / (2.0 * grid.h[1])
        return vector_field(grid, [gx, gy])

    if grid.dim == 1:
        h = grid.h[0]
        x = grid.axis(0)
        xe = np.concatenate(([x[0] - h], x, [x[-1] + h]))
        w = _potential_1d(grid, u.values, s, xe)
        return vector_field(grid, [(w[2:] - w[:-2]) / (2.0 * h)])

    hx, hy = grid.h
    xs = grid.axis(0)
    ys = grid.axis(1)
    xe = np.concatenate(([xs[0] - hx], xs, [xs[-1] + hx]))
    ye = np.concatenate(([ys[0] - hy], ys, [ys[-1] + hy]))
    mx, my = np.meshgrid(xe, ye, indexing="ij")
    pts = np.stack([mx.ravel(), my.ravel()], axis=1)
    w = _potential_2d(grid, u.values, s, pts).reshape(len(xe), len(ye))
    gx = (w[2:, 1:-1] - w[:-2, 1:-1]) / (2.0 * hx)
    gy = (w[1:-1, 2:] - w[1:-1, :-2]) / (2.0 * hy)
    return vector_field(grid, [gx, gy])


def dense_gradient_matrix(grid: BoxGrid, s: float) -> np.ndarray:
    """Explicit 1D matrix of the dense-oracle gradient (tests only)."""
    from .fractional import _order

    s = _order(s)
    _check_cap(grid)
    if grid.dim != 1:
        raise OracleSizeError("dense gradient matrix available in 1D only")
    n = grid.n[0]
    h = grid.h[0]
    x = grid.axis(0)
    xe = np.concatenate(([x[0] - h], x, [x[-1] + h]))
    if s == 1.0:
        pot_ext = np.zeros((n + 2, n))
        pot_ext[1:-1] = np.eye(n)
    else:
        c = riesz_potential_constant(1, s)
        r = np.abs(xe[:, None] - x[None, :])
        with np.errstate(divide="ignore"):
            pot_ext = np.where(r > 0.5 * h * 1e-9, c * h * r ** (-s), 0.0)
        pot_ext[r < 0.5 * h * 1e-9] = c * _singular_cell_weight(grid, s)
    diff = np.zeros((n, n + 2))
    idx = np.arange(n)
    diff[idx, idx + 2] = 1.0 / (2.0 * h)
    diff[idx, idx] = -1.0 / (2.0 * h)
    return diff @ pot_ext
