"""Shared battery problems for the test suite.

All problems live on the interval (-1, 1) with the default padding unless a
test builds its own geometry.  The nondegenerate battery uses a forcing that
jumps across the phase-weight window, so the sign condition holds a.e. and
the inter-phase band is negligible.
"""

import warnings

import numpy as np
import pytest

import fractwophase as ftp

warnings.filterwarnings("ignore", message=r"s\*p = d")


def interval_grid(n=256, padding=4.0):
    return ftp.make_grid(ftp.Interval(-1.0, 1.0), n, padding)


def make_problem(grid, mask, *, p=2.0, s=0.6, q=2.0, f=0.0, lam_plus=0.0,
                 lam_minus=0.0, v=0.0):
    def field(spec):
        if isinstance(spec, ftp.GridFunction):
            return spec
        if callable(spec):
            return ftp.from_callable(grid, spec, mask)
        return ftp.const_field(grid, float(spec), mask)

    return ftp.ProblemData(
        grid=grid, mask=mask, p=p, s=s, q=q,
        f=field(f), lambda_plus=field(lam_plus), lambda_minus=field(lam_minus),
        v=field(v),
    )


def nondegenerate_problem(n=256, p=2.0, s=0.6):
    """Forcing jumps across [-lam, lam]: sign condition holds a.e. in Omega."""
    grid, mask = interval_grid(n)
    x = grid.axis(0)
    f = ftp.grid_function(grid, np.where(x >= -0.3, 1.2 + 0.3 * x, -1.2 + 0.3 * x), mask)
    return make_problem(grid, mask, p=p, s=s, f=f, lam_plus=0.4, lam_minus=0.4)


def vdependence_problem(n=256):
    """Transversal zero crossing of u - v with weak phase weights."""
    grid, mask = interval_grid(n)
    x = grid.axis(0)
    f = ftp.grid_function(grid, x + 0.2 * np.where(x >= 0.0, 1.0, -1.0), mask)
    return make_problem(grid, mask, p=2.0, s=0.6, f=f, lam_plus=0.05, lam_minus=0.05)


def odd_problem(n=256):
    grid, mask = interval_grid(n)
    x = grid.axis(0)
    f = ftp.grid_function(grid, np.sin(np.pi * x) * (np.abs(x) < 1.0), mask)
    return make_problem(grid, mask, p=2.0, s=0.6, f=f, lam_plus=0.3, lam_minus=0.3)


@pytest.fixture(scope="session")
def quick_config():
    return ftp.SolverConfig(grad_tol=1e-8, max_iters=60000)


@pytest.fixture(scope="session")
def quick_reg():
    return ftp.RegularizationParams(eps0=1.0, ratio=0.5, steps=10)


@pytest.fixture(scope="session")
def nondegenerate_solution(quick_config, quick_reg):
    data = nondegenerate_problem()
    sol = ftp.solve_two_phase(data, quick_reg, quick_config)
    return data, sol
