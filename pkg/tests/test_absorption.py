import numpy as np
import pytest

from mel.absorption import (Nonlinearity, RadialOperator, SolveOptions,
                            relaxation_sweep, solve_absorption,
                            solve_radial_absorption)
from mel.grids import build_masked_grid, build_radial_grid
from mel.measures import MeasureData, make_boundary_dirac, make_dirac
from mel.operators import assemble, green_potential


@pytest.fixture(scope="module")
def disk_op():
    return assemble(build_masked_grid(2, "disk", 1 / 32))


def test_zero_data_gives_zero(disk_op):
    u, rep = solve_absorption(disk_op, Nonlinearity.power(2))
    assert rep.converged
    assert np.max(np.abs(u.values)) < 1e-12


def test_absorption_below_green_potential(disk_op):
    lam = make_dirac([0.0, 0.0], 1.0, domain=("disk",))
    u, rep = solve_absorption(disk_op, Nonlinearity.power(2), lam)
    assert rep.converged
    g = green_potential(disk_op, lam)
    assert np.all(u.values <= g.values + 1e-12)
    assert np.all(u.values >= 0)


def test_picard_and_newton_agree(disk_op):
    lam = make_dirac([0.2, 0.1], 1.0, domain=("disk",))
    u_p, rep_p = solve_absorption(disk_op, Nonlinearity.power(2), lam,
                                  opts=SolveOptions(method="picard"))
    u_n, rep_n = solve_absorption(disk_op, Nonlinearity.power(2), lam,
                                  opts=SolveOptions(method="newton"))
    assert rep_p.converged and rep_n.converged
    assert np.max(np.abs(u_p.values - u_n.values)) < 1e-7


def test_boundary_dirac_newton(disk_op):
    mu = make_boundary_dirac([1.0, 0.0], 4.0, domain=("disk",))
    u, rep = solve_absorption(disk_op, Nonlinearity.power(2), mu=mu,
                              opts=SolveOptions(method="newton"))
    assert rep.converged
    assert np.all(u.values >= -1e-12)


def test_monotone_in_data(disk_op):
    lam1 = make_dirac([0.0, 0.0], 1.0, domain=("disk",))
    lam2 = make_dirac([0.0, 0.0], 2.0, domain=("disk",))
    u1, _ = solve_absorption(disk_op, Nonlinearity.power(2), lam1)
    u2, _ = solve_absorption(disk_op, Nonlinearity.power(2), lam2)
    assert np.all(u2.values >= u1.values - 1e-12)


def test_radial_atom_solution_positive():
    grid = build_radial_grid(2, 1e-10, 1.0, 1200, law="logarithmic")
    rop = RadialOperator(grid)
    u, rep = solve_radial_absorption(rop, Nonlinearity.exp(1.0), atom=2 * np.pi)
    assert rep.converged
    assert np.all(u[:-1] >= -1e-12)


def test_relaxation_sweep_subcritical_limit():
    grid = build_radial_grid(2, 1e-13, 1.0, 2000, law="logarithmic")
    rop = RadialOperator(grid)
    stages = relaxation_sweep(rop, Nonlinearity.exp(1.0), 2 * np.pi,
                              [1e-2, 1e-4, 1e-6])
    # c = 2*pi is below the critical mass 4*pi/a, so the full mass survives
    assert stages[-1]["mass"] == pytest.approx(2 * np.pi, rel=0.05)


def test_nonlinearity_tabulated_matches_power():
    q = 2.0
    nl = Nonlinearity.power(q)
    s = np.linspace(0, 3, 50)
    assert np.allclose(nl.g(s), s**q)
