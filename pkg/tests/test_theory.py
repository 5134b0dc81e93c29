import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from dance import theory


def test_omega_values():
    assert theory.omega(0) == 0
    assert theory.omega_star(0) == 0
    assert theory.omega_star(0.5) == pytest.approx(0.193147180559945309, rel=1e-14)
    assert theory.OMEGA_SIXTH == pytest.approx(0.0125159868394083624, rel=1e-13)


def test_omega_domains():
    with pytest.raises(ValueError):
        theory.omega(-1)
    with pytest.raises(ValueError):
        theory.omega_star(1.0)
    with pytest.raises(ValueError):
        theory.omega_star(-0.1)


def test_omega_star_below_square_on_grid():
    for t in np.linspace(0, 0.68, 1000):
        assert theory.omega_star(float(t)) <= t * t


def test_omega_pair_brackets_quadratic():
    for t in np.linspace(0.01, 0.9, 50):
        assert theory.omega(t) <= t * t / 2 <= theory.omega_star(t)


def test_pcg_bound_example():
    assert theory.pcg_bound_reduced(1.0, 1.0, 1.0, 0.0, 1 / 20) == 7
    eps = (1 / 20) * math.sqrt(1 / 2) * 3.0
    assert theory.pcg_bound(1.0, 1.0, 1.0, 0.0, 3.0, eps) == 7


def test_pcg_bound_log_of_one():
    c, V, M, g = 0.5, 0.2, 3.0, 1.7
    lam = c * V
    eps = 2 * math.sqrt((lam + M) / lam) * g
    assert theory.pcg_bound(c, V, M, 0.0, g, eps) == 0
    assert theory.pcg_bound(c, V, M, 0.0, g, eps, base=math.e) == 0


@settings(max_examples=200, deadline=None)
@given(
    st.floats(1e-3, 10),
    st.floats(1e-4, 1),
    st.floats(0, 100),
    st.floats(0, 10),
    st.floats(1e-6, 1e3),
    st.floats(1e-3, 1 / 20),
)
def test_general_and_reduced_agree(c, V, M, mu, g, beta):
    lam = c * V
    eps = beta * math.sqrt(lam / (M + lam)) * g
    gen = theory.pcg_bound(c, V, M, mu, g, eps)
    red = theory.pcg_bound_reduced(c, V, M, mu, beta)
    exact = math.sqrt(1 + 2 * mu / lam) * math.log2(2 * (lam + M) / (beta * lam))
    # both are ceilings of the same real number; they can only split when it sits on an integer
    if abs(exact - round(exact)) > 1e-9:
        assert gen == red
    assert theory.pcg_bound(c, V, M, mu, g, eps, base=math.e) <= red


def test_inner_bound_examples():
    assert theory.inner_bound(0.01, 0.01) == 4
    assert theory.inner_bound(0.0, 2 * theory.OMEGA_SIXTH) == 0


def test_inner_bound_negative_log_counts_zero():
    # 2 omega(1/6) / V < 1 gives a negative log term
    assert theory.inner_bound(0.0, 0.5) == 0


@settings(max_examples=100, deadline=None)
@given(st.floats(0, 5), st.floats(0, 5), st.floats(1e-6, 1), st.floats(1e-6, 1))
def test_inner_bound_monotone(s1, s2, v1, v2):
    lo, hi = sorted((s1, s2))
    assert theory.inner_bound(lo, v1) <= theory.inner_bound(hi, v1)
    small, big = sorted((v1, v2))
    assert theory.inner_bound(s1, big) <= theory.inner_bound(s1, small)


def test_stage_round_bound():
    assert theory.stage_round_bound(4, 7) == 32
    assert theory.stage_round_bound(0, 123) == 0


def test_warmstart_examples():
    assert theory.warmstart_bound(0.1, 1.0, 0.0, 5.0) == pytest.approx(0.4, rel=1e-15)
    c, w2 = 0.1, 3.0
    assert theory.warmstart_bound(0.2, 0.5, c, w2) == pytest.approx((3 + (1 - 2 ** -0.5) * (2 + c / 2 * w2)) * 0.2)


def test_warmstart_general_doubling_is_below_alpha2_form():
    # with n = 2m: V_{n-m} = V_m, so the general form is
    # V_m + 2 V_m + 2 (V_m - V_n) + c/2 (V_m - V_n) |w*|^2, which the closed form upper-bounds
    for gamma in (0.5, 0.75, 1.0):
        for m in (16, 100, 1000):
            gen = theory.warmstart_bound_general(m, 2 * m, gamma, 0.1, 4.0)
            closed = theory.warmstart_bound(m ** -gamma, gamma, 0.1, 4.0)
            assert gen == pytest.approx(closed, rel=1e-12)


def test_total_round_bound_composition():
    s = theory.StageBoundInput(n=128, subopt=0.01, V_n=0.01, c=1.0, M=0.0, mu_n=0.0, beta=1 / 20)
    # c V = 0.01, M = 0: log2(2/beta) = log2(40)
    assert s.C == math.ceil(math.log2(40))
    assert theory.total_round_bound([s]) == theory.stage_round_bound(s.K, s.C)
    assert theory.total_round_bound([s, s]) == 2 * s.T


def test_inner_bound_composes_with_warmstart():
    # stage bound with the warm-start bound substituted for the measured suboptimality
    gamma, c, w2, m = 0.5, 0.1, 2.0, 256
    Vm, Vn = m ** -gamma, (2 * m) ** -gamma
    sub = theory.warmstart_bound(Vm, gamma, c, w2)
    K = theory.inner_bound(sub, Vn)
    lead = (3 + (1 - 2 ** -gamma) * (2 + c / 2 * w2)) * Vm
    expect_K = math.ceil(lead / (theory.OMEGA_SIXTH / 2)) + max(0, math.ceil(math.log2(2 * theory.OMEGA_SIXTH / Vn)))
    assert K == expect_K


def test_order_expressions_positive():
    assert theory.complexity_order(4096, 20) == pytest.approx(12 ** 3 * 8 * 400)
    assert theory.doubling_round_order(4096, 0.5) == pytest.approx(0.5 * 144 * 8 * 6)
    assert theory.doubling_round_bound(4096, 64, 0.5, 0.1, 10.0, 1.0, 1 / 20, 2.0) > 0
