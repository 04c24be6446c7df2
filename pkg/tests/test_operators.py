import numpy as np
import pytest

from mel.grids import build_masked_grid
from mel.measures import make_boundary_dirac, make_dirac
from mel.operators import (adjoint, assemble, ball_green_closed_form,
                           green_potential, harmonic_ghost_weights,
                           poisson_potential, torsion)


@pytest.fixture(scope="module")
def disk_op():
    return assemble(build_masked_grid(2, "disk", 1 / 32))


def test_torsion_positive_and_bounded(disk_op):
    z = torsion(disk_op)
    assert np.all(z.values > 0)
    # the continuum torsion of the unit disk peaks at (1 - r^2)/4 = 1/4
    assert z.values.max() == pytest.approx(0.25, abs=0.02)


def test_green_positive(disk_op):
    u = green_potential(disk_op, make_dirac([0.0, 0.0], 1.0, domain=("disk",)))
    assert np.all(u.values > 0)


def test_disk_green_matches_images(disk_op):
    grid = disk_op.grid
    u = green_potential(disk_op, make_dirac([0.0, 0.0], 1.0, domain=("disk",)))
    r = np.linalg.norm(grid.points, axis=1)
    sel = (r > 0.2) & (r < 0.8)
    oracle = np.array([ball_green_closed_form(p, np.zeros(2), 2)
                       for p in grid.points[sel]])
    rel = np.abs(u.values[sel] - oracle) / np.abs(oracle)
    assert rel.max() < 0.05


def test_adjoint_transposes(disk_op):
    at = adjoint(disk_op)
    assert (at.A - disk_op.A.T).nnz == 0


def test_poisson_constant_boundary(disk_op):
    # harmonic extension of the constant density 1 is the constant 1
    from mel.measures import MeasureData
    mu = MeasureData(domain=("disk",), boundary_density=lambda p: np.ones(len(p)))
    u = poisson_potential(disk_op, mu)
    assert np.max(np.abs(u.values - 1.0)) < 1e-8


def test_harmonic_ghost_weights_sum(disk_op):
    w = harmonic_ghost_weights(disk_op)
    assert w.shape == (disk_op.grid.ghost_count,)
    assert np.all(w > 0)
    # total harmonic measure seen from the center is the full perimeter
    assert float(w.sum()) == pytest.approx(2 * np.pi, rel=1e-8)


def test_calibrated_boundary_dirac_mass(disk_op):
    # slice integral of the Poisson kernel of the unit disk at radius r is r
    u = poisson_potential(disk_op, make_boundary_dirac([0.0, 1.0], 1.0,
                                                       domain=("disk",)))
    center = disk_op.grid.nearest_interior(np.zeros(2))
    assert u.values[center] * 2 * np.pi == pytest.approx(1.0, abs=1e-3)
