"""Stationary profiles and the spreading comparator against direct quadrature."""

import numpy as np
import pytest
from scipy.integrate import quad

from fdlab.barenblatt import (
    BarenblattProfile,
    SelfSimilarComparator,
    discrete_reference,
    matched_sigma,
    self_similar_evaluate,
    stationarity_residual,
)
from fdlab.dynamics import line_grid, radial_grid
from fdlab.exponents import ModelParams, barenblatt_constants

_SPHERE_AREA = {1: 2.0, 3: 4 * np.pi, 5: 8 * np.pi ** 2 / 3}


def _quad_moment(profile, order, d):
    """∫ |x|^order B dx by adaptive quadrature (radially for d > 1)."""
    if d == 1:
        val, err = quad(lambda x: abs(x) ** order * profile.density(x),
                        -np.inf, np.inf, limit=400)
        return val
    area = _SPHERE_AREA[d]
    val, err = quad(lambda r: area * r ** (d - 1 + order) * profile.density(r),
                    0, np.inf, limit=400)
    return val


@pytest.mark.parametrize("d,m,sigma,M", [
    (1, 0.7, 1.0, 1.0),
    (1, 0.5, 2.3, 0.7),
    (3, 0.75, 0.6, 1.0),
    (5, 0.75, 1.4, 2.0),
])
def test_profile_mass_and_second_moment_match_quadrature(d, m, sigma, M):
    P = ModelParams(d=d, m=m, M=M)
    prof = BarenblattProfile(P, sigma=sigma)
    assert _quad_moment(prof, 0, d) == pytest.approx(M, rel=1e-9)
    assert _quad_moment(prof, 2, d) == pytest.approx(prof.moment(2), rel=1e-8)
    assert prof.moment(0) == M
    assert prof.moment(2) == pytest.approx(sigma * barenblatt_constants(P).K_M)
    with pytest.raises(ValueError):
        prof.moment(4)


def test_normalization_constant_is_the_unit_profile_integral():
    # M* = ∫ (1+|x|²)^{1/(m−1)} dx, the mass of the C=1, σ=1 profile
    for d, m in ((1, 0.7), (3, 0.7), (5, 0.8)):
        bc = barenblatt_constants(ModelParams(d=d, m=m))
        if d == 1:
            val, _ = quad(lambda x: (1 + x * x) ** (1 / (m - 1)), -np.inf, np.inf)
        else:
            val, _ = quad(
                lambda r: _SPHERE_AREA[d] * r ** (d - 1) * (1 + r * r) ** (1 / (m - 1)),
                0, np.inf,
            )
        assert bc.M_star == pytest.approx(val, rel=1e-10)


def test_pressure_closed_form():
    P = ModelParams(d=1, m=0.7)
    prof = BarenblattProfile(P, sigma=1.7)
    x = np.linspace(-3, 3, 11)
    bc = prof.constants
    expected = 1.7 ** P.q * (bc.C_M + x * x / 1.7)
    assert np.allclose(prof.pressure(x), expected, rtol=1e-14)
    # pressure = density^{m−1} wherever the density is positive
    assert np.allclose(prof.pressure(x), prof.density(x) ** (P.m - 1), rtol=1e-12)


def test_scaled_pressure_gradient_is_2x():
    # σ^p ∂_x B_σ^{m−1} = 2x exactly, for every σ: the identity behind the
    # drift-free matched flux.  Checked with a tight central difference.
    P = ModelParams(d=1, m=0.55)
    for sigma in (0.5, 1.0, 3.7):
        prof = BarenblattProfile(P, sigma=sigma)
        x = np.linspace(-2.0, 2.0, 9)
        h = 1e-6
        grad = (prof.pressure(x + h) - prof.pressure(x - h)) / (2 * h)
        assert np.allclose(sigma ** P.p * grad, 2 * x, atol=5e-9)


def test_tail_mass_against_quadrature_and_inverse():
    P = ModelParams(d=1, m=0.7)
    prof = BarenblattProfile(P, sigma=1.3)
    for L in (2.0, 10.0, 60.0):
        direct, _ = quad(lambda x: prof.density(x), L, np.inf, limit=400)
        assert prof.tail_mass(L) == pytest.approx(2 * direct, rel=1e-9)
    for eta in (1e-4, 1e-8, 1e-10):
        L = prof.truncation_radius(eta)
        assert prof.tail_mass(L) == pytest.approx(eta, rel=1e-6)
    assert prof.tail_mass(0.0) == 1.0
    with pytest.raises(ValueError):
        prof.truncation_radius(0.0)


def test_tail_mass_radial_dimension():
    P = ModelParams(d=5, m=0.75)
    prof = BarenblattProfile(P, sigma=1.0)
    for L in (5.0, 40.0):
        direct, _ = quad(lambda r: _SPHERE_AREA[5] * r ** 4 * prof.density(r),
                         L, np.inf, limit=400)
        assert prof.tail_mass(L) == pytest.approx(direct, rel=1e-8)


@pytest.mark.parametrize("n", [400, 800])
def test_stationarity_residual_small(n):
    P = ModelParams(d=1, m=0.7)
    res = stationarity_residual(BarenblattProfile(P, sigma=1.2), n)
    assert res < 1e-2


def test_stationarity_residual_second_order():
    # halving h divides the discrete divergence defect by ≈4
    P = ModelParams(d=3, m=0.7)
    prof = BarenblattProfile(P, sigma=0.9)
    r1 = stationarity_residual(prof, 500)
    r2 = stationarity_residual(prof, 1000)
    assert 3.5 < r1 / r2 < 4.5


def test_comparator_mass_is_time_independent():
    P = ModelParams(d=1, m=0.7, M=1.0)
    comp = SelfSimilarComparator.mass_matched(P)
    assert comp.mass() == pytest.approx(1.0, rel=1e-12)
    for tau in (0.0, 1.0, 10.0, 1e4):
        val, _ = quad(lambda y: comp.evaluate(tau, y), -np.inf, np.inf, limit=400)
        assert val == pytest.approx(1.0, rel=1e-9)


def test_comparator_scale_radius_and_profile_shape():
    P = ModelParams(d=1, m=0.7)
    comp = SelfSimilarComparator.mass_matched(P)
    theta = P.theta
    assert comp.scale_radius(0.0) == 1.0
    assert comp.scale_radius(3.0) == pytest.approx(4.0 ** (1 / theta))
    # exact self-similarity: 𝖡(τ, scale·z) is the τ=0 profile times the
    # amplitude factor (1+τ)^{−1/(m−m_c)}, with no shape change at all
    z = np.linspace(0, 40, 101)
    for tau in (2.0, 9.0, 99.0):
        scale = comp.scale_radius(tau)
        amp = (1.0 + tau) ** (-1.0 / (P.m - P.exponents.m_c))
        assert np.allclose(comp.evaluate(tau, scale * z),
                           amp * comp.evaluate(0.0, z), rtol=1e-12)
    assert np.allclose(self_similar_evaluate(comp, 1.0, z), comp.evaluate(1.0, z))


def test_discrete_reference_mass_exact():
    P = ModelParams(d=1, m=0.7)
    grid = line_grid(512, 60.0)
    b = discrete_reference(BarenblattProfile(P, sigma=1.1), grid)
    assert float(b @ grid.volumes) == pytest.approx(1.0, abs=1e-15)
    assert (b > 0).all()

    P5 = ModelParams(d=5, m=0.75, M=2.0)
    grid5 = radial_grid(5, 256, 300.0)
    b5 = discrete_reference(BarenblattProfile(P5, sigma=1.0), grid5)
    assert float(b5 @ grid5.volumes) == pytest.approx(2.0, rel=1e-15)


def test_matched_sigma_fixed_point_on_discrete_reference():
    P = ModelParams(d=1, m=0.7)
    grid = line_grid(1024, 70.0)
    for s0 in (0.8, 1.0, 1.4):
        u = discrete_reference(BarenblattProfile(P, sigma=s0), grid)
        assert matched_sigma(P, grid, u, guess=1.0) == pytest.approx(s0, rel=1e-10)


def test_matched_sigma_tracks_the_second_moment():
    # the matched scale follows the second moment over K_M up to the O(h²)
    # midpoint-sampling bias of the discrete reference; the bias cancels in
    # ratios of matched scales
    P = ModelParams(d=1, m=0.7)
    grid = line_grid(2048, 80.0)
    K_M = barenblatt_constants(P).K_M
    u = discrete_reference(BarenblattProfile(P, sigma=1.0), grid)
    u2 = np.interp(grid.centers / 1.2, grid.centers, u) / 1.2
    u2 *= 1.0 / (u2 @ grid.volumes)
    for dens in (u, u2):
        s = matched_sigma(P, grid, dens)
        s_cont = grid.second_moment(dens) / K_M
        assert s == pytest.approx(s_cont, rel=5e-3)
    assert matched_sigma(P, grid, u2) / matched_sigma(P, grid, u) == \
        pytest.approx(1.44, rel=1e-2)
