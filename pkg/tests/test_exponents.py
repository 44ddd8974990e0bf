"""Closed-form exponents, rate tables, and their internal identities."""

import numpy as np
import pytest

from fdlab.errors import DivergentSecondMoment, UnsupportedExponent
from fdlab.exponents import (
    ModelParams,
    barenblatt_constants,
    critical_exponents,
    gamma_baseline,
    gamma_improved,
    rate_table,
)
from fdlab.spectral import lambda_improved, lambda_sharp


def test_critical_exponent_values():
    ce = critical_exponents(3)
    assert ce.m_c == pytest.approx(1 / 3)
    assert ce.m_1 == pytest.approx(2 / 3)
    assert ce.m_tilde1 == pytest.approx(3 / 5)
    assert ce.m_2 == pytest.approx(4 / 5)
    assert ce.m_tilde2 == pytest.approx(7 / 9)
    assert ce.alpha_star == pytest.approx(-0.5)

    ce1 = critical_exponents(1)
    assert ce1.m_c == -1.0
    assert ce1.m_tilde1 == pytest.approx(1 / 3)
    # in d=1 the same formula gives α_* = +1/2
    assert ce1.alpha_star == 0.5


def test_critical_exponent_ordering():
    for d in range(1, 12):
        ce = critical_exponents(d)
        assert ce.m_c < ce.m_tilde1 < 1
        if d >= 2:
            assert ce.m_tilde1 <= ce.m_1
            assert ce.m_tilde2 <= ce.m_2 < 1


def test_model_params_derived_quantities():
    P = ModelParams(d=1, m=0.7)
    assert P.alpha == pytest.approx(1 / (0.7 - 1))
    assert P.p + P.q == pytest.approx(1.0)
    assert P.theta == pytest.approx(2 * P.p)
    assert P.theta == pytest.approx(P.d * (P.m - P.exponents.m_c))

    Q = ModelParams(d=5, m=0.75)
    assert Q.p == pytest.approx(5 * (0.75 - 0.6) / 2)
    assert Q.q == pytest.approx(5 * 0.25 / 2)


@pytest.mark.parametrize("d,m", [(1, 1 / 3), (1, 0.2), (3, 0.6), (3, 1.0),
                                 (5, 5 / 7), (2, 0.5 - 1e-9)])
def test_model_params_rejects_out_of_range_m(d, m):
    with pytest.raises(UnsupportedExponent):
        ModelParams(d=d, m=m)


def test_params_reject_bad_mass():
    with pytest.raises(ValueError):
        ModelParams(d=1, m=0.7, M=0.0)
    with pytest.raises(ValueError):
        ModelParams(d=1, m=0.7, M=-2.0)


def test_barenblatt_constants_relations():
    P = ModelParams(d=1, m=0.7, M=1.0)
    bc = barenblatt_constants(P)
    ce = P.exponents
    # K_M is tied to C_M by the fixed moment quotient
    expected = (1 - P.m) * ce.m_tilde1 / (P.m - ce.m_tilde1) * P.M * bc.C_M
    assert bc.K_M == pytest.approx(expected, rel=1e-15)
    assert bc.M_star > 0 and bc.C_M > 0

    # mass scaling: C_M depends on M through a pure power
    bc2 = barenblatt_constants(ModelParams(d=1, m=0.7, M=2.0))
    theta = P.theta
    assert bc2.C_M / bc.C_M == pytest.approx(2.0 ** (-2 * (1 - P.m) / theta), rel=1e-14)


def test_divergent_second_moment_guard():
    P = ModelParams(d=3, m=0.65)
    object.__setattr__(P, "m", 0.55)    # below m̃₁ = 0.6, bypassing the ctor
    with pytest.raises(DivergentSecondMoment):
        barenblatt_constants(P)


def test_gamma_improved_branches_d5():
    # reference-dimension values: 4(d+2)m−4d on the middle branch, then 4
    val, branch = gamma_improved(5, 0.9)
    assert val == pytest.approx(4.0)
    assert branch == "lambda_20"
    val, branch = gamma_improved(5, 0.84)      # m̃₂ = 9/11 < 0.84 < m₂ = 6/7
    assert val == pytest.approx(4 * 7 * 0.84 - 20)
    assert branch == "lambda_02"
    val, branch = gamma_improved(5, 0.72)
    assert val == pytest.approx((3 * 0.72 - 1) ** 2 / (4 * 0.28))
    assert branch == "continuum"


def test_gamma_improved_branches_d1():
    val, branch = gamma_improved(1, 0.5)
    assert val == pytest.approx(2.5 ** 2 / 2.0)
    assert branch == "continuum"
    val, branch = gamma_improved(1, 0.7)
    assert val == pytest.approx(4.2)
    assert branch == "lambda_3"


def test_gamma_baseline_values_and_guard():
    val, branch = gamma_baseline(5, 0.9)
    assert val == pytest.approx(2.0)
    assert branch == "lambda_10"
    val, branch = gamma_baseline(5, 0.75)
    assert val == pytest.approx(2 * 5 * 0.75 - 6)
    assert branch == "lambda_01"
    with pytest.raises(UnsupportedExponent):
        gamma_baseline(1, 0.7)


@pytest.mark.parametrize("d", [2, 3, 4, 5])
def test_branch_continuity_at_junctions(d):
    ce = critical_exponents(d)
    for mj in (ce.m_tilde2, ce.m_2):
        lo, _ = gamma_improved(d, mj - 1e-9)
        hi, _ = gamma_improved(d, mj + 1e-9)
        assert abs(hi - lo) < 1e-7
    if d >= 3:
        # d=2 has m₁ = m̃₁: that junction sits on the boundary of support
        lo, _ = gamma_baseline(d, ce.m_1 - 1e-9)
        hi, _ = gamma_baseline(d, ce.m_1 + 1e-9)
        assert abs(hi - lo) < 1e-7


def test_gamma_continuity_d1_junction():
    lo, _ = gamma_improved(1, 0.6 - 1e-9)
    hi, _ = gamma_improved(1, 0.6 + 1e-9)
    assert abs(hi - lo) < 1e-7
    assert gamma_improved(1, 0.6)[0] == pytest.approx(3.6)


@pytest.mark.parametrize("d", [1, 2, 3, 4, 5])
def test_gamma_equals_one_minus_m_times_lambda(d):
    ce = critical_exponents(d)
    for m in np.linspace(ce.m_tilde1 + 1e-4, 1 - 1e-4, 60):
        m = float(m)
        alpha = 1.0 / (m - 1.0)
        g, _ = gamma_improved(d, m)
        lam, _ = lambda_improved(alpha, d)
        assert abs(g - (1 - m) * lam) < 1e-12
        if d >= 2:
            gb, _ = gamma_baseline(d, m)
            ls, _ = lambda_sharp(alpha, d)
            assert abs(gb - (1 - m) * ls) < 1e-12


def test_rate_table_assembly():
    rt = rate_table(5, 0.75)
    assert rt.gamma_improved == pytest.approx((1 - 0.75) * rt.lambda_improved)
    assert rt.gamma_baseline == pytest.approx((1 - 0.75) * rt.lambda_sharp)
    assert rt.branch_improved in ("continuum", "lambda_02", "lambda_20")

    rt1 = rate_table(1, 0.7)
    assert rt1.gamma_baseline is None and rt1.branch_baseline is None
    assert rt1.gamma_improved == pytest.approx(4.2)
