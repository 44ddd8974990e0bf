"""Eigenvalue ladders, gap selectors, and the constrained Rayleigh verifier."""

import numpy as np
import pytest

from fdlab.errors import NoDiscreteEigenvalue, UnsupportedAlpha
from fdlab.spectral import (
    SPECTRUM_CSV_HEADER,
    RayleighProblem,
    continuous_bottom,
    eigenvalue,
    enumerated_gap,
    gaussian_limit_check,
    lambda_improved,
    lambda_sharp,
    rayleigh_estimate,
    rayleigh_lowest,
    sector_essential_bottom,
    spectrum_table,
    write_spectrum_csv,
)

ALPHAS = (-1.2, -2.0, -10.0 / 3.0, -4.0, -5.5, -7.0, -12.0, -40.0)


def test_eigenvalue_closed_form_d5():
    # λ_{ℓk} = −2α(ℓ+2k) − 4k(k+ℓ+d/2−1) at α=−6, d=5
    a = -6.0
    assert eigenvalue(0, 1, a, 5) == (2 * 6 * 2 - 4 * (1 + 0 + 1.5), True)
    assert eigenvalue(1, 0, a, 5)[0] == pytest.approx(12.0)
    assert eigenvalue(2, 0, a, 5)[0] == pytest.approx(24.0)
    lam, ok = eigenvalue(0, 2, a, 5)
    assert lam == pytest.approx(48 - 4 * 2 * (2 + 1.5))
    assert ok   # ℓ+2k−1 = 3 < −(5−12)/2 = 3.5


def test_eigenvalue_validity_window():
    # (0,0) is never an eigenvalue; high modes exit the point spectrum
    assert eigenvalue(0, 0, -3.0, 5)[1] is False
    lam, ok = eigenvalue(0, 2, -4.0, 5)
    assert not ok          # 3 < 1.5 fails
    assert np.isfinite(lam)
    # d=1 ladder: valid for 1 ≤ k ≤ 1/2 − α
    assert eigenvalue(0, 3, -2.0, 1)[1] is False
    assert eigenvalue(0, 2, -2.0, 1) == (2 * (1 + 4 - 2), True)
    with pytest.raises(ValueError):
        eigenvalue(1, 1, -2.0, 1)
    with pytest.raises(ValueError):
        eigenvalue(0, 1, 0.5, 3)


def test_continuous_bottom_values():
    assert continuous_bottom(-4.0, 5) == pytest.approx(6.25)
    assert continuous_bottom(-2.0, 2) == pytest.approx(4.0)
    assert continuous_bottom(-2.0, 1) == pytest.approx(6.25)
    assert sector_essential_bottom(-4.0, 5, 2) == pytest.approx(6.25 + 2 * 5)
    assert sector_essential_bottom(-4.0, 5, 0) == pytest.approx(6.25)


def test_lambda_sharp_branches():
    # d=5: translation branch below α=−5, dilation in the middle, continuum above
    val, br = lambda_sharp(-7.0, 5)
    assert (val, br) == (14.0, "lambda_10")
    val, br = lambda_sharp(-4.0, 5)
    assert val == pytest.approx(6.0) and br == "lambda_01"
    val, br = lambda_sharp(-2.0, 5)
    assert val == pytest.approx(0.25 * (3 - 4) ** 2) and br == "continuum"
    # d=1 and d=2 specializations
    assert lambda_sharp(-3.0, 1) == (6.0, "lambda_1")
    assert lambda_sharp(-0.2, 1)[1] == "continuum"
    assert lambda_sharp(-1.0, 2) == (1.0, "continuum")
    assert lambda_sharp(-3.0, 2) == (6.0, "lambda_10")


def test_lambda_sharp_rejects_unsupported_alpha():
    with pytest.raises(UnsupportedAlpha):
        lambda_sharp(-0.5, 3)      # α = α_* exactly: no gap statement there
    with pytest.raises(UnsupportedAlpha):
        lambda_sharp(0.0, 5)
    with pytest.raises(UnsupportedAlpha):
        lambda_sharp(1.0, 1)


def test_lambda_improved_branches():
    # d=5: continuum window, then the k=2 dilation mode, then ℓ=2
    val, br = lambda_improved(-4.0, 5)
    assert val == pytest.approx(0.25 * (3 - 8) ** 2) and br == "continuum"
    val, br = lambda_improved(-6.0, 5)
    assert val == pytest.approx(48 - 28) and br == "lambda_02"
    val, br = lambda_improved(-20.0, 5)
    assert val == pytest.approx(80.0) and br == "lambda_20"
    # d=1: ladder mode k=3 takes over below −5/2
    val, br = lambda_improved(-10.0 / 3.0, 1)
    assert val == pytest.approx(14.0) and br == "lambda_3"
    val, br = lambda_improved(-2.0, 1)
    assert val == pytest.approx(6.25) and br == "continuum"


def test_lambda_improved_requires_matched_range():
    with pytest.raises(UnsupportedAlpha):
        lambda_improved(-3.0, 5)     # needs α < −(d+2)/2 = −3.5
    with pytest.raises(UnsupportedAlpha):
        lambda_improved(-0.4, 1)
    with pytest.raises(UnsupportedAlpha):
        lambda_improved(-1.5, 2)


@pytest.mark.parametrize("d", [1, 2, 3, 5, 8])
def test_selectors_match_enumeration(d):
    """The piecewise tables agree with brute-force enumeration of the ladder."""
    lo = -(d + 2) / 2
    for alpha in np.linspace(lo - 25.0, lo - 1e-3, 140):
        alpha = float(alpha)
        improved, _ = lambda_improved(alpha, d)
        if d == 1:
            excl = [(0, 1), (0, 2)]
        else:
            excl = [(0, 0), (1, 0), (0, 1)]
        assert improved == pytest.approx(enumerated_gap(alpha, d, excl), abs=1e-12)
    for alpha in np.linspace(-30.0, -1e-3, 140):
        alpha = float(alpha)
        if alpha == -(d - 2) / 2:
            continue
        try:
            sharp, _ = lambda_sharp(alpha, d)
        except UnsupportedAlpha:
            continue
        assert sharp == pytest.approx(enumerated_gap(alpha, d, [(0, 0)]), abs=1e-12)


def test_spectrum_table_contents():
    tab = spectrum_table(-6.0, 5, lmax=3, kmax=3)
    rows = {(l, k): (lam, ok) for l, k, lam, ok in tab.discrete}
    assert (0, 0) not in rows
    assert rows[(1, 0)][0] == pytest.approx(12.0)
    assert tab.continuous_bottom == pytest.approx((6 - 1.5) ** 2)
    assert tab.lambda_sharp == pytest.approx(12.0)   # translation mode −2α
    assert tab.lambda_improved == pytest.approx(20.0)

    # above the matched window the improved column is absent, not wrong
    tab2 = spectrum_table(-3.0, 5)
    assert tab2.lambda_improved is None
    assert tab2.improved_branch is None


def test_spectrum_csv_schema(tmp_path):
    tabs = [spectrum_table(a, 5, lmax=2, kmax=2) for a in (-4.0, -6.0)]
    path = tmp_path / "spec.csv"
    write_spectrum_csv(path, tabs)
    lines = path.read_text().strip().split("\n")
    assert lines[0] == ",".join(SPECTRUM_CSV_HEADER)
    body = [ln.split(",") for ln in lines[1:]]
    # sentinel row (−1,−1) carries the essential bottom for each α
    sentinels = [r for r in body if r[2] == "-1"]
    assert len(sentinels) == 2
    assert float(sentinels[0][4]) == pytest.approx(6.25)
    # repr round trip: every lambda reparses to the exact float
    for r in body:
        lam, ok = (float(r[4]), r[5])
        assert repr(lam) == r[4]
        assert ok in ("0", "1")


# ---------------------------------------------------------------------------
# discretized verifier (small node counts: these are smoke-level accuracy)
# ---------------------------------------------------------------------------

def test_rayleigh_unconstrained_sector_certifies_translation_mode():
    prob = RayleighProblem(alpha=-6.0, d=5, l=1, nodes=1200)
    res = rayleigh_lowest(prob)
    assert res.certified
    assert res.value == pytest.approx(12.0, rel=2e-3)
    assert float(res) == res.value


def test_rayleigh_constrained_d1_ladder():
    prob = RayleighProblem(alpha=-5.0, d=1, l=0, constraints=("mass",), nodes=1500)
    res = rayleigh_lowest(prob)
    # lowest even mode orthogonal to the profile is k=2: λ = 2(1−2α−2) = 18
    assert res.value == pytest.approx(18.0, rel=2e-3)
    assert res.certified


def test_rayleigh_reports_essential_bottom_without_certifying():
    # α=−4, d=5 under mass+second constraints: the k=2 formula is invalid,
    # the constrained minimum sits at the essential bottom (α+3/2)² = 6.25
    prob = RayleighProblem(alpha=-4.0, d=5, l=0, constraints=("mass", "second"),
                           nodes=1200)
    with pytest.raises(NoDiscreteEigenvalue) as exc:
        rayleigh_lowest(prob)
    assert exc.value.estimate == pytest.approx(6.25, rel=0.02)
    res = rayleigh_estimate(prob)
    assert not res.certified
    assert res.value == pytest.approx(6.25, rel=0.02)


def test_rayleigh_problem_validation():
    with pytest.raises(ValueError):
        RayleighProblem(alpha=0.5, d=5, l=0)
    with pytest.raises(ValueError):
        RayleighProblem(alpha=-2.0, d=5, l=-1)
    with pytest.raises(ValueError):
        RayleighProblem(alpha=-2.0, d=1, l=2)
    with pytest.raises(ValueError):
        RayleighProblem(alpha=-2.0, d=5, l=0, constraints=("volume",))


def test_gaussian_limit_recovers_classical_gap():
    rep = gaussian_limit_check(tolerance=0.02, d=5)
    assert rep.ok
    assert rep.gap_numeric == pytest.approx(rep.gap_target, rel=0.02)
    assert rep.limits_ok
