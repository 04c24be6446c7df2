import numpy as np
import pytest

from mel.absorption import Nonlinearity, SolveOptions, solve_absorption
from mel.grids import build_masked_grid
from mel.measures import MeasureData, make_boundary_dirac
from mel.operators import assemble, poisson_potential
from mel.trace import (boundary_nodes, classify_boundary,
                       strong_singularity_minorant, trace_measure)

T_LIST = [0.1, 0.05, 0.025]


@pytest.fixture(scope="module")
def disk_op():
    return assemble(build_masked_grid(2, "disk", 1 / 32))


def test_boundary_nodes_on_circle(disk_op):
    nodes = boundary_nodes(disk_op.grid)
    assert np.allclose(np.linalg.norm(nodes.points, axis=1), 1.0, atol=1e-12)
    assert nodes.weights.sum() == pytest.approx(2 * np.pi, rel=1e-10)


def test_smooth_density_trace_recovered(disk_op):
    # trace of the harmonic extension of 1 + cos(theta) is that density
    dens = lambda p: 1.0 + p[:, 0]
    mu = MeasureData(domain=("disk",), boundary_density=dens)
    u = poisson_potential(disk_op, mu)
    rep = trace_measure(u, disk_op.grid, T_LIST)
    assert len(rep.atoms) == 0
    assert rep.total_mass() == pytest.approx(2 * np.pi, rel=0.02)
    exact = dens(rep.nodes.points)
    assert np.mean(np.abs(rep.density - exact)) < 0.1


def test_boundary_atom_detected(disk_op):
    mu = make_boundary_dirac([0.0, 1.0], 1.0, domain=("disk",))
    u = poisson_potential(disk_op, mu)
    rep = trace_measure(u, disk_op.grid, T_LIST)
    assert len(rep.atoms) == 1
    loc, mass = rep.atoms[0]
    assert np.linalg.norm(loc - np.array([0.0, 1.0])) < 0.3
    assert mass == pytest.approx(1.0, abs=0.1)


def test_atom_plus_density_split(disk_op):
    mu = MeasureData(domain=("disk",),
                     boundary_atoms=((np.array([1.0, 0.0]), 1.0),),
                     boundary_density=lambda p: np.full(len(p), 0.1))
    u = poisson_potential(disk_op, mu)
    rep = trace_measure(u, disk_op.grid, T_LIST)
    assert len(rep.atoms) == 1
    assert rep.atom_mass() == pytest.approx(1.0, abs=0.15)
    assert rep.total_mass() == pytest.approx(1.0 + 0.2 * np.pi, rel=0.1)


def test_classify_boundary_singular(disk_op):
    # a heavy atom saturates to the strong-singularity profile inside the
    # probe annuli, where the weighted absorption integral diverges
    mu = make_boundary_dirac([1.0, 0.0], 1024.0, domain=("disk",))
    nl = Nonlinearity.power(2.0)
    u, rep = solve_absorption(disk_op, nl, mu=mu,
                              opts=SolveOptions(method="newton"))
    assert rep.converged
    verdicts = classify_boundary(u, nl, disk_op.grid, r_probe=0.5)
    i = int(np.argmin(np.linalg.norm(
        boundary_nodes(disk_op.grid).points - np.array([1.0, 0.0]), axis=1)))
    assert verdicts[i] == "Singular"
    j = int(np.argmin(np.linalg.norm(
        boundary_nodes(disk_op.grid).points - np.array([-1.0, 0.0]), axis=1)))
    assert verdicts[j] == "Regular"


def test_minorant_monotone(disk_op):
    rep = strong_singularity_minorant(disk_op, 2.0, np.array([1.0, 0.0]),
                                      [1.0, 4.0, 16.0])
    assert rep.monotone
    assert rep.slope < -1.0
