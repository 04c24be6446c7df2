import numpy as np
import pytest

from mel.grids import build_masked_grid
from mel.measures import make_dirac
from mel.operators import assemble, green_potential
from mel.source import (estimate_C0, necessary_check, sigma_threshold,
                        sigma_threshold_scan, solve_source, theta_star)


@pytest.fixture(scope="module")
def setup():
    op = assemble(build_masked_grid(3, "ball", 1 / 16))
    lam = make_dirac([0.0, 0.0, 0.0], 1.0, domain=("ball",))
    return op, lam


def test_sigma_threshold_closed_form():
    # sigma0 = 1 / (q * (C0 q)^(1/(q-1)))
    q, C0 = 2.0, 3.0
    assert sigma_threshold(q, C0) == pytest.approx(1.0 / (2.0 * 6.0))


def test_threshold_matches_scan():
    q, C0 = 2.0, 1.7
    assert sigma_threshold_scan(q, C0) == pytest.approx(sigma_threshold(q, C0),
                                                        abs=1e-10)


def test_theta_star_fixed_point():
    # theta* solves theta = 1 + C0 sigma q^... via the scan optimum structure:
    # at sigma0 the map theta -> 1 + C0 sigma theta^q has a double root
    q, C0 = 2.0, 1.0
    s0 = sigma_threshold(q, C0)
    th = theta_star(q, C0, 0.5 * s0)
    assert th > 1.0
    assert th == pytest.approx(1.0 + C0 * 0.5 * s0 * th**q, rel=1e-8)


def test_converges_below_threshold(setup):
    op, lam = setup
    q = 2.0
    s0 = sigma_threshold(q, estimate_C0(op, lam, q))
    u, rep = solve_source(op, q, 0.5 * s0, lam)
    assert rep.converged
    g = green_potential(op, lam)
    th = theta_star(q, estimate_C0(op, lam, q), 0.5 * s0)
    sigma = 0.5 * s0
    assert np.all(u.values >= sigma * g.values - 1e-10)
    assert np.all(u.values <= th * sigma * g.values + 1e-9)
    assert necessary_check(op, lam, sigma, q) >= -1e-8


def test_diverges_far_above_threshold(setup):
    op, lam = setup
    q = 2.0
    s0 = sigma_threshold(q, estimate_C0(op, lam, q))
    _, rep = solve_source(op, q, 20.0 * s0, lam)
    assert not rep.converged
