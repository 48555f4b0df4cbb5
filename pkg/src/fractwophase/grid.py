"""Uniform padded grids, domain masks, and scalar/vector fields.

Functions of the solution space are represented by their node values on a
uniform tensor-product grid over a box that strictly contains the domain
Omega, and are extended by zero outside Omega.  The box is periodic for the
purposes of the spectral operators; the padding keeps the periodic images
far from the support of the fields.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence, Union

import numpy as np

from .errors import GridMismatchError, InvalidExponentError


def _is_power_of_two(n: int) -> bool:
    return n >= 1 and (n & (n - 1)) == 0


def _freeze(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class BoxGrid:
    """Uniform periodic grid on the padded box.

    Nodes are cell centers: along axis k they sit at
    ``lower[k] + (j + 1/2) h[k]`` for ``j = 0..n[k]-1``, so the rectangle
    rule over node values is the midpoint rule and symmetric boxes have a
    reflection-symmetric node set.  ``n`` must be a power of two (>= 8)
    along every axis.  ``padding_factor`` records the ratio of box diameter
    to Omega diameter used at construction; it is metadata and does not
    participate in grid equality.
    """

    dim: int
    lower: tuple[float, ...]
    upper: tuple[float, ...]
    n: tuple[int, ...]
    padding_factor: float = field(default=4.0, compare=False)

    def __post_init__(self):
        if self.dim not in (1, 2):
            raise ValueError(f"dim must be 1 or 2, got {self.dim}")
        object.__setattr__(self, "lower", tuple(float(x) for x in self.lower))
        object.__setattr__(self, "upper", tuple(float(x) for x in self.upper))
        object.__setattr__(self, "n", tuple(int(k) for k in self.n))
        if not (len(self.lower) == len(self.upper) == len(self.n) == self.dim):
            raise ValueError("lower, upper, n must all have length dim")
        for k in range(self.dim):
            if not (self.n[k] >= 8 and _is_power_of_two(self.n[k])):
                raise ValueError(f"n[{k}] = {self.n[k]} must be a power of two >= 8")
            if not self.upper[k] > self.lower[k]:
                raise ValueError(f"upper[{k}] must exceed lower[{k}]")
        if not self.padding_factor >= 2.0:
            raise ValueError("padding_factor must be >= 2")

    @property
    def h(self) -> tuple[float, ...]:
        return tuple((u - l) / k for l, u, k in zip(self.lower, self.upper, self.n))

    @property
    def shape(self) -> tuple[int, ...]:
        return self.n

    @property
    def lengths(self) -> tuple[float, ...]:
        return tuple(u - l for l, u in zip(self.lower, self.upper))

    @property
    def cell_volume(self) -> float:
        return float(np.prod(self.h))

    @property
    def num_nodes(self) -> int:
        return int(np.prod(self.n))

    def axis(self, k: int) -> np.ndarray:
        """Node (cell-center) coordinates along axis k."""
        return self.lower[k] + self.h[k] * (np.arange(self.n[k]) + 0.5)

    def meshgrid(self) -> list[np.ndarray]:
        """Node coordinate arrays of shape ``self.shape`` (ij indexing)."""
        return list(np.meshgrid(*(self.axis(k) for k in range(self.dim)), indexing="ij"))


def same_geometry(a: BoxGrid, b: BoxGrid) -> bool:
    return a == b  # padding_factor excluded from comparison by construction


def _check_same_grid(*grids: BoxGrid) -> None:
    g0 = grids[0]
    for g in grids[1:]:
        if g != g0:
            raise GridMismatchError("fields live on different grids")


# ---------------------------------------------------------------------------
# Omega shapes and masks
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Interval:
    a: float
    b: float

    def __post_init__(self):
        if not self.b > self.a:
            raise ValueError("interval needs b > a")

    dim = 1

    def bbox(self):
        return (self.a,), (self.b,)

    def diameter(self) -> float:
        return self.b - self.a

    def contains(self, coords: Sequence[np.ndarray]) -> np.ndarray:
        x = coords[0]
        return (x > self.a) & (x < self.b)


@dataclass(frozen=True)
class Box2D:
    x0: float
    x1: float
    y0: float
    y1: float

    def __post_init__(self):
        if not (self.x1 > self.x0 and self.y1 > self.y0):
            raise ValueError("box needs x1 > x0 and y1 > y0")

    dim = 2

    def bbox(self):
        return (self.x0, self.y0), (self.x1, self.y1)

    def diameter(self) -> float:
        return math.hypot(self.x1 - self.x0, self.y1 - self.y0)

    def contains(self, coords):
        x, y = coords
        return (x > self.x0) & (x < self.x1) & (y > self.y0) & (y < self.y1)


@dataclass(frozen=True)
class Ball:
    center: tuple[float, ...]
    radius: float

    def __post_init__(self):
        object.__setattr__(self, "center", tuple(float(c) for c in self.center))
        if len(self.center) not in (1, 2):
            raise ValueError("ball center must have 1 or 2 coordinates")
        if not self.radius > 0:
            raise ValueError("ball needs radius > 0")

    @property
    def dim(self):
        return len(self.center)

    def bbox(self):
        lo = tuple(c - self.radius for c in self.center)
        hi = tuple(c + self.radius for c in self.center)
        return lo, hi

    def diameter(self) -> float:
        return 2.0 * self.radius

    def contains(self, coords):
        r2 = sum((coords[k] - self.center[k]) ** 2 for k in range(self.dim))
        return r2 < self.radius ** 2


OmegaShape = Union[Interval, Box2D, Ball]


@dataclass(frozen=True)
class OmegaMask:
    """Boolean node membership of Omega inside the padded box.

    Every inside node must keep a margin of ``(padding_factor - 1)/2`` times
    the Omega diameter to the box boundary, and the inside set must be
    nonempty.
    """

    grid: BoxGrid
    inside: np.ndarray

    def __post_init__(self):
        inside = np.asarray(self.inside, dtype=bool)
        if inside.shape != self.grid.shape:
            raise ValueError("mask shape does not match grid")
        object.__setattr__(self, "inside", _freeze(inside))
        if not inside.any():
            raise ValueError("Omega mask is empty")
        self._check_margin()

    def _check_margin(self):
        g = self.grid
        coords = g.meshgrid()
        lo_dist = []
        for k in range(g.dim):
            xk = coords[k][self.inside]
            lo_dist.append(min(xk.min() - g.lower[k], g.upper[k] - xk.max()))
        margin = min(lo_dist)
        diam = self.node_diameter()
        required = 0.5 * (g.padding_factor - 1.0) * diam
        if margin < required - 1e-9 * (1.0 + diam):
            raise ValueError(
                f"inside nodes come within {margin:.6g} of the box boundary; "
                f"padding requires at least {required:.6g}"
            )

    def node_diameter(self) -> float:
        """Largest pairwise distance between inside nodes."""
        coords = self.grid.meshgrid()
        pts = np.stack([coords[k][self.inside] for k in range(self.grid.dim)], axis=1)
        if self.grid.dim == 1:
            return float(pts.max() - pts.min())
        try:
            from scipy.spatial import ConvexHull

            hull = pts[ConvexHull(pts).vertices]
        except Exception:  # degenerate (collinear) node sets
            hull = pts
        d2 = ((hull[:, None, :] - hull[None, :, :]) ** 2).sum(axis=2)
        return float(math.sqrt(d2.max()))

    @property
    def measure(self) -> float:
        """Cell-volume-weighted measure of the inside node set."""
        return float(self.inside.sum()) * self.grid.cell_volume

    @property
    def indicator(self) -> np.ndarray:
        return self.inside.astype(float)


def make_grid(omega: OmegaShape, n, padding_factor: float = 4.0) -> tuple[BoxGrid, OmegaMask]:
    """Build the padded box grid and the Omega membership mask.

    The box leaves a margin of ``(padding_factor - 1)/2 * diam(Omega)`` on
    every side of the bounding box of Omega, so that the zero extension has
    room before its periodic images.
    """
    dim = omega.dim
    if np.isscalar(n):
        n = (int(n),) * dim
    else:
        n = tuple(int(k) for k in n)
    lo, hi = omega.bbox()
    margin = 0.5 * (padding_factor - 1.0) * omega.diameter()
    lower = tuple(l - margin for l in lo)
    upper = tuple(u + margin for u in hi)
    grid = BoxGrid(dim=dim, lower=lower, upper=upper, n=n, padding_factor=padding_factor)
    inside = omega.contains(grid.meshgrid())
    return grid, OmegaMask(grid=grid, inside=inside)


# ---------------------------------------------------------------------------
# Fields
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class GridFunction:
    """Scalar field given by node values on a :class:`BoxGrid`.

    Values are copied and frozen at construction; all operations return new
    objects, so instances may be shared freely across threads.
    """

    grid: BoxGrid
    values: np.ndarray
    zero_outside_omega: bool = False

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.shape != self.grid.shape:
            raise ValueError(f"values shape {v.shape} != grid shape {self.grid.shape}")
        if not np.all(np.isfinite(v)):
            raise ValueError("field values must be finite")
        object.__setattr__(self, "values", _freeze(v.copy()))

    def with_values(self, values: np.ndarray, zero_outside_omega: bool | None = None) -> "GridFunction":
        flag = self.zero_outside_omega if zero_outside_omega is None else zero_outside_omega
        return GridFunction(self.grid, values, flag)


@dataclass(frozen=True)
class VectorField:
    """d-component field; all components share one grid."""

    components: tuple[GridFunction, ...]

    def __post_init__(self):
        if not self.components:
            raise ValueError("vector field needs at least one component")
        _check_same_grid(*(c.grid for c in self.components))
        object.__setattr__(self, "components", tuple(self.components))

    @property
    def grid(self) -> BoxGrid:
        return self.components[0].grid

    @property
    def dim(self) -> int:
        return len(self.components)

    def arrays(self) -> list[np.ndarray]:
        return [c.values for c in self.components]

    def magnitude(self) -> np.ndarray:
        return np.sqrt(sum(c.values ** 2 for c in self.components))


def grid_function(grid: BoxGrid, values, mask: OmegaMask | None = None) -> GridFunction:
    """Wrap node values; if a mask is given the values are zeroed outside Omega."""
    v = np.broadcast_to(np.asarray(values, dtype=float), grid.shape)
    if mask is not None:
        return GridFunction(grid, np.where(mask.inside, v, 0.0), True)
    return GridFunction(grid, np.array(v))


def from_callable(grid: BoxGrid, fn: Callable[..., np.ndarray],
                  mask: OmegaMask | None = None) -> GridFunction:
    """Sample ``fn(x)`` (1D) or ``fn(x, y)`` (2D) at the nodes."""
    vals = fn(*grid.meshgrid())
    return grid_function(grid, vals, mask)


def vector_field(grid: BoxGrid, arrays: Sequence[np.ndarray]) -> VectorField:
    return VectorField(tuple(GridFunction(grid, a) for a in arrays))


# ---------------------------------------------------------------------------
# Named field builders (the documented config builtins)
# ---------------------------------------------------------------------------

def const_field(grid: BoxGrid, value: float, mask: OmegaMask | None = None) -> GridFunction:
    return grid_function(grid, float(value), mask)


def gaussian_bump(grid: BoxGrid, amplitude: float, center, width: float,
                  mask: OmegaMask | None = None) -> GridFunction:
    """``amplitude * exp(-|x - center|^2 / (2 width^2))``."""
    center = (center,) if np.isscalar(center) else tuple(center)
    coords = grid.meshgrid()
    r2 = sum((coords[k] - center[k]) ** 2 for k in range(grid.dim))
    return grid_function(grid, amplitude * np.exp(-r2 / (2.0 * width ** 2)), mask)


def linear_ramp(grid: BoxGrid, slope: float, center: float = 0.0,
                mask: OmegaMask | None = None) -> GridFunction:
    """``slope * (x_0 - center)`` along the first axis."""
    x = grid.meshgrid()[0]
    return grid_function(grid, slope * (x - center), mask)


def sine_mode(grid: BoxGrid, amplitude: float, k, mask: OmegaMask | None = None) -> GridFunction:
    """``amplitude * sin(2 pi sum_j k_j (x_j - lower_j) / L_j)`` on the box torus."""
    k = (k,) if np.isscalar(k) else tuple(k)
    coords = grid.meshgrid()
    phase = sum(k[j] * (coords[j] - grid.lower[j]) / grid.lengths[j] for j in range(grid.dim))
    return grid_function(grid, amplitude * np.sin(2.0 * np.pi * phase), mask)


def compact_bump(grid: BoxGrid, center, radius: float, amplitude: float = 1.0,
                 mask: OmegaMask | None = None) -> GridFunction:
    """Smooth compactly supported bump: ``A exp(1 - 1/(1 - (r/R)^2))`` for r < R."""
    center = (center,) if np.isscalar(center) else tuple(center)
    coords = grid.meshgrid()
    r2 = sum((coords[k] - center[k]) ** 2 for k in range(grid.dim)) / radius ** 2
    vals = np.zeros(grid.shape)
    core = r2 < 1.0
    with np.errstate(divide="ignore"):
        vals[core] = amplitude * np.exp(1.0 - 1.0 / (1.0 - r2[core]))
    return grid_function(grid, vals, mask)


FIELD_BUILTINS = {
    "const": const_field,
    "gaussian_bump": gaussian_bump,
    "linear_ramp": linear_ramp,
    "sine_mode": sine_mode,
}


# ---------------------------------------------------------------------------
# Norms, quadrature, zero extension
# ---------------------------------------------------------------------------

def _validate_exponent(p: float) -> float:
    p = float(p)
    if not (p > 1.0 and math.isfinite(p)):
        raise InvalidExponentError(f"exponent p must be finite and > 1, got {p}")
    return p


def integrate(values: np.ndarray, grid: BoxGrid, region: str = "box",
              mask: OmegaMask | None = None) -> float:
    """Rectangle-rule integral of node values over the box or over Omega."""
    if region == "box":
        return float(values.sum()) * grid.cell_volume
    if region == "omega":
        if mask is None:
            raise ValueError("region='omega' requires a mask")
        return float(values[mask.inside].sum()) * grid.cell_volume
    raise ValueError(f"unknown region {region!r}")


def lp_norm(u: GridFunction, p: float, region: str = "box",
            mask: OmegaMask | None = None) -> float:
    """L^p norm by the rectangle rule: ``(sum |u_i|^p * cellvol)^(1/p)``."""
    p = _validate_exponent(p)
    return float(integrate(np.abs(u.values) ** p, u.grid, region, mask) ** (1.0 / p))


def lp_norm_values(values: np.ndarray, grid: BoxGrid, p: float, region: str = "box",
                   mask: OmegaMask | None = None) -> float:
    p = _validate_exponent(p)
    return float(integrate(np.abs(values) ** p, grid, region, mask) ** (1.0 / p))


def vector_lp_norm(F: VectorField, p: float) -> float:
    """L^p norm of the pointwise Euclidean magnitude, over the box."""
    p = _validate_exponent(p)
    mag = F.magnitude()
    return float(integrate(mag ** p, F.grid, "box") ** (1.0 / p))


def vector_lp_norm_arrays(comps: Sequence[np.ndarray], grid: BoxGrid, p: float) -> float:
    p = _validate_exponent(p)
    mag = np.sqrt(sum(c ** 2 for c in comps))
    return float(integrate(mag ** p, grid, "box") ** (1.0 / p))


def l2_inner(a: np.ndarray, b: np.ndarray, grid: BoxGrid) -> float:
    """L^2 inner product on the box with cell-volume weight."""
    return float(np.vdot(a, b).real) * grid.cell_volume


def l2_norm_values(values: np.ndarray, grid: BoxGrid) -> float:
    return math.sqrt(max(l2_inner(values, values, grid), 0.0))


def enforce_zero_extension(u: GridFunction, mask: OmegaMask) -> GridFunction:
    """Zero the values outside Omega; idempotent projection."""
    if u.grid != mask.grid:
        raise GridMismatchError("field and mask grids differ")
    return GridFunction(u.grid, np.where(mask.inside, u.values, 0.0), True)
