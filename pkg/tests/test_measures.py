import numpy as np
import pytest

from mel.grids import build_masked_grid
from mel.measures import MeasureData, discretize, make_boundary_dirac, make_dirac


def test_dirac_mass_conserved():
    g = build_masked_grid(2, "disk", 1 / 16)
    lam = make_dirac([0.1, 0.2], 1.7, domain=("disk",))
    f = discretize(lam, g)
    assert float(np.sum(f.values)) * g.cell_volume() == pytest.approx(1.7, rel=1e-12)


def test_off_lattice_dirac_mass_and_center():
    g = build_masked_grid(2, "disk", 1 / 16)
    x0 = np.array([0.103, -0.212])
    f = discretize(make_dirac(x0, 1.0, domain=("disk",)), g)
    assert float(np.sum(f.values)) * g.cell_volume() == pytest.approx(1.0, rel=1e-12)
    centroid = (f.values @ g.points) * g.cell_volume()
    assert np.allclose(centroid, x0, atol=g.h)


def test_bump_mass_conserved():
    g = build_masked_grid(2, "disk", 1 / 32)
    lam = MeasureData(domain=("disk",), bumps=((np.zeros(2), 2.5, 0.1),))
    f = discretize(lam, g)
    assert float(np.sum(f.values)) * g.cell_volume() == pytest.approx(2.5, rel=1e-10)


def test_density_measure():
    g = build_masked_grid(2, "disk", 1 / 16)
    lam = MeasureData(domain=("disk",), density=lambda p: np.ones(len(p)))
    f = discretize(lam, g)
    assert float(np.sum(f.values)) * g.cell_volume() == pytest.approx(np.pi, rel=0.05)


def test_atom_mass_accounts_atoms_and_bumps():
    lam = MeasureData(domain=("disk",),
                      atoms=((np.zeros(2), 1.0),),
                      bumps=((np.array([0.3, 0.0]), 0.5, 0.05),))
    assert lam.atom_mass() == pytest.approx(1.5)


def test_boundary_dirac_has_boundary_atom():
    mu = make_boundary_dirac([1.0, 0.0], 2.0, domain=("disk",))
    assert len(mu.boundary_atoms) == 1
    assert mu.boundary_atoms[0][1] == pytest.approx(2.0)
