"""Problem instance and closed-form exponents for fast-diffusion rescaling.

The fast diffusion equation ∂v/∂τ + ∇·(v∇v^{m−1}) = 0 on ℝ^d, with
m ∈ (m_c, 1), m_c = (d−2)/d, is studied here through its moment-matched
rescaling.  This module holds the problem instance (d, m, M), the critical
exponents

    m_c = (d−2)/d,   m₁ = (d−1)/d,   m̃₁ = d/(d+2),
    m₂ = (d+1)/(d+2),   m̃₂ = (d+4)/(d+6),

the Barenblatt normalization constants (M*, C_M, K_M), and the closed-form
entropy decay rates γ(m): the baseline rate of the self-similar rescaling and
the improved rate obtained when the profile scale σ is slaved to the second
moment of the solution.

Everything here is exact arithmetic on closed forms; the only floating-point
subtlety is the Gamma function, evaluated through `scipy.special.gammaln`
(Lanczos-class, relative error below 1e−13).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import gammaln

from .errors import DivergentSecondMoment, UnsupportedExponent

# m must stay clear of both endpoints: K_M ∝ 1/(m − m̃₁) blows up at m̃₁ and
# every rate formula divides by (1 − m).
EXPONENT_GUARD = 1e-6


@dataclass(frozen=True)
class CriticalExponents:
    """The five critical diffusion exponents of dimension d, plus α_* = −(d−2)/2.

    Ordering facts used throughout: m_c < m̃₁ < 1 for every d ≥ 1, and for
    d ≥ 2 additionally m̃₁ ≤ m₁ and m̃₂ ≤ m₂ < 1.
    """

    d: int
    m_c: float
    m_1: float
    m_tilde1: float
    m_2: float
    m_tilde2: float
    alpha_star: float


def critical_exponents(d: int) -> CriticalExponents:
    """Closed-form critical exponents for dimension d ≥ 1."""
    if not isinstance(d, (int, np.integer)) or d < 1:
        raise ValueError(f"dimension must be a positive integer, got {d!r}")
    d = int(d)
    return CriticalExponents(
        d=d,
        m_c=(d - 2) / d,
        m_1=(d - 1) / d,
        m_tilde1=d / (d + 2),
        m_2=(d + 1) / (d + 2),
        m_tilde2=(d + 4) / (d + 6),
        alpha_star=-(d - 2) / 2,
    )


def _check_m_range(d: int, m: float) -> CriticalExponents:
    ce = critical_exponents(d)
    if not (ce.m_tilde1 + EXPONENT_GUARD < m < 1 - EXPONENT_GUARD):
        raise UnsupportedExponent(
            f"m={m!r} outside supported open range "
            f"({ce.m_tilde1}, 1) with {EXPONENT_GUARD} guard bands (d={d}); "
            "below m̃₁ the second moment diverges, above it the heat regime starts"
        )
    return ce


@dataclass(frozen=True)
class ModelParams:
    """A problem instance: dimension d, diffusion exponent m, total mass M.

    Requires m̃₁(d) < m < 1 (strictly, with guard bands of 1e−6): this is the
    regime where the stationary profile has a finite second moment so the scale
    σ can be matched to it.  All derived exponents are exposed as properties:

        α   = 1/(m−1) < 0        weight exponent of the linearization,
        p   = d(m−m_c)/2 > 0     σ-exponent of the rescaled flux,
        q   = d(1−m)/2           σ-exponent of the pressure B_σ^{m−1},
        θ   = d(m−m_c) = 2p      exponent of the self-similar time law.

    Note p + q = 1, the identity that makes σ^p ∇B_σ^{m−1} = 2x exact.
    """

    d: int
    m: float
    M: float = 1.0

    def __post_init__(self):
        _check_m_range(self.d, self.m)
        if not (np.isfinite(self.M) and self.M > 0):
            raise ValueError(f"total mass must be positive and finite, got {self.M!r}")

    @property
    def exponents(self) -> CriticalExponents:
        return critical_exponents(self.d)

    @property
    def alpha(self) -> float:
        return 1.0 / (self.m - 1.0)

    @property
    def alpha_star(self) -> float:
        return -(self.d - 2) / 2

    @property
    def p(self) -> float:
        return self.d * (self.m - self.exponents.m_c) / 2

    @property
    def q(self) -> float:
        return self.d * (1 - self.m) / 2

    @property
    def theta(self) -> float:
        return self.d * (self.m - self.exponents.m_c)


@dataclass(frozen=True)
class BarenblattConstants:
    """Normalization constants of the stationary profile family at mass M.

    M* is the mass of the unnormalized profile (1+|x|²)^{1/(m−1)},

        M* = π^{d/2} Γ(d(m−m_c)/(2(1−m))) / Γ(1/(1−m)),

    C_M = (M/M*)^{−2(1−m)/(d(m−m_c))} fixes ∫B_σ = M, and

        K_M = ∫|x|² B₁ dx = (1−m)m̃₁/(m−m̃₁) · M·C_M

    is the second moment of the unit-scale profile (finite iff m > m̃₁).
    """

    M_star: float
    C_M: float
    K_M: float


def barenblatt_constants(params: ModelParams) -> BarenblattConstants:
    """Closed-form (M*, C_M, K_M) for a problem instance.

    Raises DivergentSecondMoment if m ≤ m̃₁ (defense in depth; ModelParams
    already refuses such exponents).
    """
    d, m, M = params.d, params.m, params.M
    ce = params.exponents
    if m <= ce.m_tilde1:
        raise DivergentSecondMoment(
            f"K_M diverges for m={m} ≤ m̃₁={ce.m_tilde1} (d={d})"
        )
    theta = d * (m - ce.m_c)
    # Γ-quotient through gammaln to dodge overflow at small 1−m.
    M_star = np.pi ** (d / 2) * np.exp(
        gammaln(theta / (2 * (1 - m))) - gammaln(1 / (1 - m))
    )
    C_M = (M / M_star) ** (-2 * (1 - m) / theta)
    K_M = (1 - m) * ce.m_tilde1 / (m - ce.m_tilde1) * M * C_M
    return BarenblattConstants(M_star=M_star, C_M=C_M, K_M=K_M)


def gamma_improved(d: int, m: float) -> tuple[float, str]:
    """Improved entropy decay rate γ(m) of the moment-matched rescaling.

    Piecewise closed form (d ≥ 2):

        γ(m) = ((d−2)m−(d−4))²/(4(1−m))   on (m̃₁, m̃₂]   (essential-spectrum bottom)
        γ(m) = 4(d+2)m − 4d               on [m̃₂, m₂]    (radial k=2 eigenvalue)
        γ(m) = 4                          on [m₂, 1)     (ℓ=2 eigenvalue)

    and for d = 1:

        γ(m) = (3−m)²/(4(1−m))   on (1/3, 3/5]   (essential-spectrum bottom)
        γ(m) = 6m                on [3/5, 1)     (k=3 eigenvalue)

    Adjacent branches agree at the interior breakpoints, so the closed-right
    interval convention is observationally irrelevant.  Returns (value, branch)
    with branch ∈ {"continuum", "lambda_02", "lambda_20"} (d ≥ 2) or
    {"continuum", "lambda_3"} (d = 1), naming the spectral object that attains
    the rate through γ = (1−m)·Λ at α = 1/(m−1).
    """
    ce = _check_m_range(d, m)
    if d == 1:
        if m <= 0.6:
            return (3 - m) ** 2 / (4 * (1 - m)), "continuum"
        return 6 * m, "lambda_3"
    if m <= ce.m_tilde2:
        return ((d - 2) * m - (d - 4)) ** 2 / (4 * (1 - m)), "continuum"
    if m < ce.m_2:
        return 4 * (d + 2) * m - 4 * d, "lambda_02"
    return 4.0, "lambda_20"


def gamma_baseline(d: int, m: float) -> tuple[float, str]:
    """Baseline entropy decay rate of the plain self-similar rescaling, d ≥ 2.

        γ(m) = 2dm − 2(d−2)   on (m̃₁, m₁]   (dilation eigenvalue)
        γ(m) = 2              on [m₁, 1)    (translation eigenvalue)

    Continuous at m₁.  Equals (1−m)·Λ_sharp(1/(m−1), d) on the whole range.
    Returns (value, branch) with branch ∈ {"lambda_01", "lambda_10"}.
    """
    if d < 2:
        raise UnsupportedExponent(
            "the baseline rate table is stated for d ≥ 2; "
            "in d=1 the off-center rate is the constant 2"
        )
    ce = _check_m_range(d, m)
    if m <= ce.m_1:
        return 2 * d * m - 2 * (d - 2), "lambda_01"
    return 2.0, "lambda_10"


@dataclass(frozen=True)
class RateTable:
    """Both decay rates of one problem instance, with their spectral values.

    gamma_improved = (1−m)·lambda_improved and, for d ≥ 2,
    gamma_baseline = (1−m)·lambda_sharp, both at α = 1/(m−1).
    gamma_baseline is None in d = 1 (the off-center rate there is 2 and is
    reported by the experiment drivers directly).
    """

    d: int
    m: float
    gamma_improved: float
    branch_improved: str
    lambda_improved: float
    gamma_baseline: float | None
    branch_baseline: str | None
    lambda_sharp: float


def rate_table(d: int, m: float) -> RateTable:
    """Assemble the rate table for (d, m), m ∈ (m̃₁, 1)."""
    # Deferred import: spectral has no dependency back on this module's tables.
    from .spectral import lambda_improved, lambda_sharp

    alpha = 1.0 / (m - 1.0)
    gi, bi = gamma_improved(d, m)
    li, _ = lambda_improved(alpha, d)
    ls, _ = lambda_sharp(alpha, d)
    if d >= 2:
        gb, bb = gamma_baseline(d, m)
    else:
        gb, bb = None, None
    return RateTable(
        d=d,
        m=m,
        gamma_improved=gi,
        branch_improved=bi,
        lambda_improved=li,
        gamma_baseline=gb,
        branch_baseline=bb,
        lambda_sharp=ls,
    )
