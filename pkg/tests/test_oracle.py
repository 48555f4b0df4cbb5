import math

import numpy as np
import pytest

import fractwophase as ftp
from fractwophase.errors import OracleSizeError
from fractwophase.oracle import dense_gradient_matrix, riesz_potential_constant


def bump_grid(n=256):
    grid = ftp.BoxGrid(1, (-2.0,), (3.0,), (n,), padding_factor=5.0)
    return grid, ftp.compact_bump(grid, (0.5,), 0.35, 1.0)


def rel_l2(a: ftp.VectorField, b: ftp.VectorField) -> float:
    grid = a.grid
    diff = ftp.vector_field(grid, [x.values - y.values
                                   for x, y in zip(a.components, b.components)])
    return ftp.vector_lp_norm(diff, 2.0) / ftp.vector_lp_norm(a, 2.0)


def test_oracle_zero_input():
    grid, _ = bump_grid(64)
    z = ftp.const_field(grid, 0.0)
    out = ftp.dense_oracle_gradient(z, 0.5)
    assert np.all(out.components[0].values == 0.0)


def test_oracle_potential_constant():
    # gamma(1, 1/2) = 1/sqrt(2 pi) from the closed form
    assert riesz_potential_constant(1, 0.5) == pytest.approx(1.0 / math.sqrt(2.0 * math.pi), rel=1e-12)


def test_oracle_s1_reduces_to_central_difference():
    grid = ftp.BoxGrid(1, (-2.0,), (3.0,), (128,), padding_factor=5.0)
    u = ftp.gaussian_bump(grid, 1.0, (0.5,), 0.25)
    spec = ftp.riesz_gradient(u, 1.0)
    den = ftp.dense_oracle_gradient(u, 1.0)
    err128 = rel_l2(spec, den)
    grid2 = ftp.BoxGrid(1, (-2.0,), (3.0,), (256,), padding_factor=5.0)
    u2 = ftp.gaussian_bump(grid2, 1.0, (0.5,), 0.25)
    err256 = rel_l2(ftp.riesz_gradient(u2, 1.0), ftp.dense_oracle_gradient(u2, 1.0))
    # second-order differencing: error drops ~4x per refinement
    assert err128 / err256 == pytest.approx(4.0, rel=0.4)
    assert err256 < 5e-3


@pytest.mark.parametrize("s", [0.4, 0.5, 0.7])
def test_oracle_matches_spectral_on_smooth_bump(s):
    grid, bump = bump_grid(256)
    spec = ftp.riesz_gradient(bump, s)
    den = ftp.dense_oracle_gradient(bump, s)
    assert rel_l2(spec, den) < 5e-2


def test_oracle_matches_spectral_2d():
    # coarse mutual check at the 2D size cap; the equal-area singular-cell
    # treatment is low order, so the bound is looser than the 1D one
    grid, mask = ftp.make_grid(ftp.Ball((0.0, 0.0), 1.0), 64, 4.0)
    bump = ftp.compact_bump(grid, (0.0, 0.0), 0.8, 1.0, mask)
    spec = ftp.riesz_gradient(bump, 0.6)
    den = ftp.dense_oracle_gradient(bump, 0.6)
    assert rel_l2(spec, den) < 0.2


def test_oracle_size_cap():
    grid = ftp.BoxGrid(1, (0.0,), (1.0,), (512,))
    u = ftp.const_field(grid, 1.0)
    with pytest.raises(OracleSizeError):
        ftp.dense_oracle_gradient(u, 0.5)
    grid2 = ftp.BoxGrid(2, (0.0, 0.0), (1.0, 1.0), (128, 128))
    with pytest.raises(OracleSizeError):
        ftp.dense_oracle_gradient(ftp.const_field(grid2, 1.0), 0.5)


def test_dense_gradient_matrix_matches_apply():
    grid, bump = bump_grid(128)
    G = dense_gradient_matrix(grid, 0.5)
    direct = ftp.dense_oracle_gradient(bump, 0.5)
    assert np.allclose(G @ bump.values, direct.components[0].values, atol=1e-12)
