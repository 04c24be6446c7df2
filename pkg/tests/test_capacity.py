import numpy as np
import pytest

from mel.capacity import (capacity_scaling_study, dual_capacity_lower,
                          point_capacity_problem, removability_predicate,
                          sobolev_capacity)


def test_removability_predicate_interior():
    # interior critical exponent n/(n-2): q >= critical means removable
    assert removability_predicate(2.0, 3) is False   # 2 < 3 persists
    assert removability_predicate(4.0, 3) is True    # 4 >= 3 removable
    assert removability_predicate(3.0, 2) is False   # n = 2: never removable
    assert removability_predicate(1.5, 4) is False
    assert removability_predicate(3.0, 4) is True


def test_removability_predicate_boundary():
    # boundary critical exponent (n+1)/(n-1)
    assert removability_predicate(2.0, 2, where="boundary") is False
    assert removability_predicate(3.5, 2, where="boundary") is True
    assert removability_predicate(1.5, 3, where="boundary") is False
    assert removability_predicate(2.5, 3, where="boundary") is True


def test_point_capacity_positive_n3():
    est = sobolev_capacity(point_capacity_problem(3, 2, 2.0, 1 / 8))
    assert est.value > 0
    assert est.residual <= 1e-6


def test_refinement_stable_n3():
    rows, _ = capacity_scaling_study(3, 2, 2.0, [1 / 8, 1 / 16])
    ratio = rows[1]["value"] / rows[0]["value"]
    assert ratio == pytest.approx(1.0, abs=0.15)


def test_capacity_decays_n5():
    rows, slope = capacity_scaling_study(5, 2, 2.0, [1 / 2, 1 / 4, 1 / 8])
    ratios = [rows[i + 1]["value"] / rows[i]["value"] for i in range(2)]
    for r in ratios:
        assert r == pytest.approx(0.5, abs=0.3)
    assert slope > 0  # capacity -> 0 with h: removable point


def test_dual_lower_bound_below_primal():
    prob = point_capacity_problem(3, 2, 2.0, 1 / 8)
    lower = dual_capacity_lower(prob)
    upper = sobolev_capacity(prob).value
    assert 0 < lower
    assert lower <= upper * (1.0 + 0.75)  # same order; dual uses raw kernel mass
