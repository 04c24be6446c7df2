import numpy as np
import pytest

from mel.radial import (cap_eigenproblem, cap_residual,
                        classify_interior_singularity, ell_qn,
                        explicit_profile_residual, gamma_qn,
                        keller_osserman_certificate, shoot_radial)


def test_explicit_absorption_amplitudes():
    # ell_{q,n}^{q-1} = (2/(q-1)) * (2q/(q-1) - n)
    assert ell_qn(2.0, 3) ** 1.0 == pytest.approx(2.0 * (4.0 - 3.0))
    assert ell_qn(3.0, 2) ** 2.0 == pytest.approx(1.0 * (3.0 - 2.0))


def test_explicit_source_amplitudes():
    # gamma_{q,n}^{q-1} = (2/(q-1)) * (n - 2q/(q-1))
    assert gamma_qn(5.0, 3) ** 4.0 == pytest.approx(0.5 * (3.0 - 2.5))
    assert gamma_qn(3.0, 5) ** 2.0 == pytest.approx(1.0 * (5.0 - 3.0))


@pytest.mark.parametrize("kind,q,n", [("absorption", 2.0, 3),
                                      ("absorption", 3.0, 2),
                                      ("absorption", 1.5, 4),
                                      ("source", 5.0, 3),
                                      ("source", 3.0, 5)])
def test_explicit_profile_residual(kind, q, n):
    r = np.geomspace(1e-3, 0.9, 200)
    assert explicit_profile_residual(kind, q, n, r) <= 1e-10


def test_shoot_on_strong_profile_classifies_strong():
    q, n = 2.0, 3
    r0 = 0.5
    amp = ell_qn(q, n)
    beta = 2.0 / (q - 1.0)
    prof = shoot_radial("absorption", q, n, r0, amp * r0 ** (-beta),
                        -beta * amp * r0 ** (-beta - 1.0), 1e-5)
    verdict = classify_interior_singularity(prof, q, n)
    assert verdict.verdict == "Strong"
    assert verdict.slope == pytest.approx(-beta, rel=0.02)


def test_generic_shoot_classifies_weak():
    prof = shoot_radial("absorption", 2.0, 3, 1.0, 1.0, -1.05, 1e-5)
    verdict = classify_interior_singularity(prof, 2.0, 3)
    assert verdict.verdict == "Weak"
    assert verdict.mass is not None and verdict.mass > 0


def test_cap_existence_matches_critical_exponent():
    # boundary critical exponent (n+1)/(n-1)
    assert cap_eigenproblem(2.0, 2) is not None      # 2 < 3
    assert cap_eigenproblem(4.0, 2) is None          # 4 > 3
    assert cap_eigenproblem(1.5, 3) is not None      # 1.5 < 2
    assert cap_eigenproblem(2.1, 3) is None          # 2.1 > 2


def test_cap_profile_residual():
    cp = cap_eigenproblem(2.0, 2)
    assert cap_residual(cp) <= 1e-8


def test_keller_osserman_certificate():
    # certificate returns the worst ratio u(r) / (C rho^{-2/(q-1)}) <= 1
    assert keller_osserman_certificate(2.0, 3) <= 1.0 + 1e-9
