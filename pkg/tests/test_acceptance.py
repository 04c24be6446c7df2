"""Acceptance suite: twelve criteria, one pass/fail line each.

Every criterion drives the matching catalog experiment at its default
parameters and asserts the pinned tolerances on the reported metrics, so the
same gates are reachable from the CLI (`mel run <id> --check`).
"""

import math

import numpy as np
import pytest

from mel.experiments import ExperimentConfig, run_experiment


def _run(exp_id, **params):
    return run_experiment(ExperimentConfig(experiment=exp_id, params=params))


def _report(num, name, ok):
    print(f"criterion {num:02d} {name}: {'PASS' if ok else 'FAIL'}")
    assert ok


def test_criterion_01_explicit_singular_profiles():
    res = _run("explicit-profiles")
    ok = res.metrics["max_residual"] <= 1e-10
    _report(1, "explicit singular profiles", ok)


def test_criterion_02_green_oracle():
    res = _run("green-oracle")
    m = res.metrics
    ok = (m["max_rel_err_h"] <= 0.05
          and 0.35 <= m["err_ratio"] <= 0.65)
    _report(2, "Green oracle on the unit ball", ok)


def test_criterion_03_interior_dichotomy():
    res = _run("radial-dichotomy")
    m = res.metrics
    ok = (m["worst_strong_err"] <= 0.02
          and m["worst_weak_err"] <= 0.02
          and m["unclassified"] == 0)
    _report(3, "interior strong/weak dichotomy", ok)


def test_criterion_04_exponential_relaxation():
    res = _run("relaxation-2d")
    ok = res.metrics["worst_limit_err"] <= 0.05
    _report(4, "2-D exponential relaxation limit", ok)


def test_criterion_05_supercritical_interior_collapse():
    res = _run("interior-collapse")
    m = res.metrics
    ok = bool(m["strictly_decreasing"]) and m["final_over_first"] <= 0.5
    _report(5, "supercritical interior collapse", ok)


def test_criterion_06_source_threshold():
    res = _run("sigma-threshold")
    m = res.metrics
    ok = (m["scan_gap"] <= 1e-10
          and m["low_verdict"] == "Converged"
          and m["high_verdict"] == "Diverged"
          and bool(m["bounds_ok"])
          and m["necessary_margin"] >= -1e-8)
    _report(6, "source solvability threshold", ok)


def test_criterion_07_boundary_critical_exponent():
    res = _run("boundary-trace")
    m = res.metrics
    ok = (abs(m["trace_atom_mass"] - 1.0) <= 0.05
          and abs(m["slope"] + 2.0) <= 0.10
          and bool(m["monotone"])
          and m["collapse_ratio"] <= 0.2)
    _report(7, "boundary critical exponent", ok)


def test_criterion_08_cap_eigenproblem():
    res = _run("cap-eigen")
    m = res.metrics
    ok = (bool(m["existence_exact"])
          and m["max_residual"] <= 1e-8
          and m["separable_residual"] <= 1e-3)
    _report(8, "spherical-cap eigenproblem", ok)


def test_criterion_09_marcinkiewicz_suite():
    res = _run("marcinkiewicz")
    m = res.metrics
    ok = (m["worst_margin"] >= 0.0
          and m["green_norm_drift"] <= 0.15
          and math.isfinite(m["poisson_weak_norm"]))
    _report(9, "Marcinkiewicz suite", ok)


def test_criterion_10_kernel_estimates():
    res = _run("kernel-estimates")
    m = res.metrics
    finite = all(math.isfinite(float(m[k])) for k in
                 ("green_upper_sup", "poisson_upper_sup", "poisson_lower_inf",
                  "three_g_sup", "equiv_ratio_max", "equiv_ratio_min"))
    ok = finite and m["poisson_lower_inf"] > 0 and m["equiv_ratio_min"] > 0
    _report(10, "two-sided kernel estimates", ok)


def test_criterion_11_capacity_scaling():
    res = _run("capacity-scaling")
    m = res.metrics
    ok = (all(abs(r - 1.0) <= 0.15 for r in m["ratios_n3"])
          and all(abs(r - 0.5) <= 0.3 for r in m["ratios_n5"])
          and bool(m["predicate_agreement"]))
    _report(11, "capacity refinement scaling", ok)


def test_criterion_12_order_and_stability():
    res = _run("order-stability")
    m = res.metrics
    ok = (m["worst_order_violation"] <= 0.0
          and m["apriori_constant"] <= m["torsion_sup"] * (1 + 1e-9)
          and m["energy_drift"] <= 1e-6)
    # byte-identical rerun of the same configuration
    res2 = _run("order-stability")
    same = all(r1 == r2 for r1, r2 in zip(res.rows, res2.rows))
    _report(12, "order, stability, determinism", ok and same)
