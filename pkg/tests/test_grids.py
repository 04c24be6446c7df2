import numpy as np
import pytest

from mel.errors import DomainError
from mel.grids import build_masked_grid, build_radial_grid


def test_disk_interior_points_inside():
    g = build_masked_grid(2, "disk", 1 / 16)
    r = np.linalg.norm(g.points, axis=1)
    assert np.all(r < 1.0)
    # count scales like the disk area over the cell area
    assert g.interior_count == pytest.approx(np.pi / g.h**2, rel=0.05)


def test_disk_refinement_quadruples_count():
    c1 = build_masked_grid(2, "disk", 1 / 8).interior_count
    c2 = build_masked_grid(2, "disk", 1 / 16).interior_count
    assert c2 / c1 == pytest.approx(4.0, rel=0.1)


def test_ball_count_matches_volume():
    g = build_masked_grid(3, "ball", 1 / 8)
    assert g.interior_count == pytest.approx(4 * np.pi / 3 / g.h**3, rel=0.1)


def test_rho_is_boundary_distance():
    g = build_masked_grid(2, "disk", 1 / 16)
    r = np.linalg.norm(g.points, axis=1)
    assert np.allclose(g.rho, 1.0 - r, atol=1e-12)
    assert np.all(g.rho > 0)


def test_ghost_points_outside():
    g = build_masked_grid(2, "disk", 1 / 16)
    r = np.linalg.norm(g.ghost_points, axis=1)
    assert np.all(r >= 1.0 - 1e-12)


def test_radial_grid_laws():
    uni = build_radial_grid(3, 1e-3, 1.0, 100, law="uniform")
    assert np.allclose(np.diff(uni.r), uni.r[1] - uni.r[0])
    log = build_radial_grid(3, 1e-8, 1.0, 100, law="logarithmic")
    assert np.all(np.diff(log.r) > 0)
    ratios = log.r[2:] / log.r[1:-1]
    assert np.allclose(ratios, ratios[0], rtol=1e-6)


def test_unknown_shape_raises():
    with pytest.raises(DomainError):
        build_masked_grid(2, "pentagon", 1 / 8)


def test_unknown_radial_law_raises():
    with pytest.raises(DomainError):
        build_radial_grid(2, 1e-3, 1.0, 10, law="exp")
