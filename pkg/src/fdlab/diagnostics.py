"""Entropy, Fisher information, inequality monitors, scans and rate fits.

Everything here is a pure function of solver snapshots.  The central objects,
for a density u with ratio w = u/B̃_σ and discrepancy f = (w−1)B̃_σ^{m−1}:

    F_σ[u] = 1/(m−1) ∫ [u^m − B^m − mB^{m−1}(u−B)]      relative entropy
    I_σ[u] = 1/(1−m)² ∫ |∇(u^{m−1} − B_σ^{m−1})|² u      relative Fisher info
    h₁ = inf w,  h₂ = sup w,  h = max{h₂, 1/h₁}          uniform closeness
    X(h) = h^{5−2m} − 1,  Y(h) = d(1−m)(h^{4(2−m)} − 1)

All quadratures use the discrete mass-normalized reference B̃_σ of
`barenblatt.discrete_reference` (the same field the solver's flux sees),
which is what makes the semi-discrete identity dF/dt = −m(1−m)σ^p I exact and
the mass/second-moment orthogonality residuals vanish identically at the
matched scale.  The monitored inequalities:

    sandwich       h^{m−2} ∫f²B^{2−m} ≤ (2/m)F ≤ h^{2−m} ∫f²B^{2−m}
    fisher_bound   ∫|∇f|²B ≤ [1+X(h)] I + Y(h) ∫f²B^{2−m}
    interpolation  F ≤ h^{2−m}(1+X)/(2[Λ−σY]) · m σ^p I   (gated by h < h*)

with Λ the improved spectral-gap constant.  Identity checks consume the
per-step log of a run rather than coarse snapshots, since their defect is
first order in Δt and must be measured at step resolution to show it.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.integrate import trapezoid

from .barenblatt import BarenblattProfile, discrete_reference, matched_sigma
from .errors import BracketMiss, InsufficientDecay, UnsupportedExponent
from .exponents import ModelParams, barenblatt_constants, gamma_baseline, gamma_improved
from .spectral import lambda_improved

__all__ = [
    "EntropyReport",
    "entropy_report",
    "relative_entropy",
    "relative_fisher",
    "production_identity_check",
    "sigma_ode_check",
    "BoundsCheck",
    "bounds_check",
    "MinimizerScan",
    "minimizer_scan",
    "OrthogonalityCheck",
    "orthogonality_check",
    "RateFit",
    "fit_rate",
    "k_ratio",
    "write_report_csv",
]

# Entropy integrand switches to its Taylor series below this |w−1|; the direct
# expression loses all significant digits as w → 1 while the series is exact
# to O(δ⁶) there.
PHI_SERIES_THRESHOLD = 1e-4

# Cells carrying less than this fraction of M are excluded from h₁/h₂: the
# no-flux truncation distorts the ratio in the outermost cells.
H_MASS_CUT = 1e-12

# Inequality slacks (relative).  The sandwich holds cellwise algebraically, so
# only roundoff is allowed; the gradient-based bounds compare two different
# discrete quadratures of the same continuum object and carry the measured
# O(h²) discrepancy of the standard grids.
SANDWICH_SLACK = 1e-9
FISHER_SLACK = 5e-3
INTERPOLATION_SLACK = 5e-3

# Orthogonality tolerances: mass and second moment vanish by construction
# (normalized reference, matched σ), so their budgets are pure roundoff.  The
# center of mass is exactly zero only for even data; generic data source an
# O(h²) transient through the scheme's asymmetric truncation error, hence the
# absolute allowance scaled by the natural length √σ.
R0_TOL_FACTOR = 1e-11          # × M
R1_REL = 1e-8                  # × ∫|x||u − B̃|
R1_ABS_FACTOR = 1e-5           # × M√σ
R2_TOL_FACTOR = 1e-10          # × σ K_M

# Automatic rate-fit window: uniform closeness and decay floor.
FIT_H_THRESHOLD = 1e-2
FIT_FLOOR_FACTOR = 1e-12
FIT_MIN_EFOLDS = 2.0

RATE_CONVENTION = "slope of -d log F/dt in rescaled time; R-exponent = slope/2"


def _phi(m: float, delta: np.ndarray) -> np.ndarray:
    """(1+δ)^m − 1 − mδ, series-stabilized near δ = 0 (it is O(δ²) there)."""
    delta = np.asarray(delta, dtype=float)
    small = np.abs(delta) < PHI_SERIES_THRESHOLD
    ds = np.where(small, delta, 0.0)
    series = 0.5 * m * (m - 1.0) * ds * ds * (
        1.0 + (m - 2.0) * ds / 3.0 + (m - 2.0) * (m - 3.0) * ds * ds / 12.0
    )
    dd = np.where(small, 0.0, delta)
    with np.errstate(invalid="ignore"):
        direct = np.expm1(m * np.log1p(dd)) - m * dd
    return np.where(small, series, direct)


# ----------------------------------------------------------------------------
# scalar functionals
# ----------------------------------------------------------------------------

def relative_entropy(u: np.ndarray, profile: BarenblattProfile, grid) -> float:
    """F_σ[u] against the discrete reference at the profile's scale; ≥ 0,
    vanishing only at u = B̃_σ."""
    m = profile.params.m
    ref = discrete_reference(profile, grid)
    val = np.dot(ref ** m * _phi(m, u / ref - 1.0), grid.volumes) / (m - 1.0)
    return float(val) + 0.0   # normalize −0.0 at the exact fixed point


def relative_fisher(u: np.ndarray, sigma: float, params: ModelParams, grid) -> float:
    """I_σ[u] with face-centered gradients and harmonic-mean mobility.

    Discretized as Σ_f A_f m_f (Δψ/δ)² δ / (1−m)² with ψ = u^{m−1} − B̃_σ^{m−1};
    exactly the Fisher information whose product with m(1−m)σ^p is the
    semi-discrete entropy production of the solver's flux.
    """
    m = params.m
    ref = discrete_reference(BarenblattProfile(params, sigma=sigma), grid)
    psi = u ** (m - 1.0) - ref ** (m - 1.0)
    a, b = u[:-1], u[1:]
    mf = 2.0 * a * b / (a + b)
    df = np.diff(grid.centers)
    grad = np.diff(psi) / df
    return float(np.dot(grid.face_areas * mf, grad * grad * df) / (1.0 - m) ** 2)


def relative_entropy_state(state) -> float:
    return relative_entropy(
        state.u, BarenblattProfile(state.params, sigma=state.sigma), state.grid
    )


def relative_fisher_state(state) -> float:
    return relative_fisher(state.u, state.sigma, state.params, state.grid)


# ----------------------------------------------------------------------------
# snapshot report
# ----------------------------------------------------------------------------

@dataclass(frozen=True)
class EntropyReport:
    """All scalar diagnostics of one snapshot.

    E equals F (the original-variable entropy transforms onto the relative
    entropy under the rescaling).  r0, r1, r2 are |∫x^j f B^{2−m}| for
    j = 0, 1, 2, i.e. mass, center-of-mass and second-moment discrepancies of
    u against the reference.  q_f2 = ∫f²B^{2−m} and q_grad = ∫|∇f|²B are the
    quadratures the inequality monitors consume.  𝗄 compares the shifted
    second moment against its stationary value (σ = 1 reference).
    """

    params: ModelParams
    t: float
    tau: float
    R: float
    sigma: float
    F: float
    I: float
    E: float
    h1: float
    h2: float
    h: float
    X: float
    Y: float
    mass: float
    second_moment: float
    center_of_mass: float
    r0: float
    r1: float
    r2: float
    r1_scale: float
    k: float
    q_f2: float
    q_grad: float
    mode: str


def entropy_report(state) -> EntropyReport:
    params, grid = state.params, state.grid
    m, d = params.m, params.d
    profile = BarenblattProfile(params, sigma=state.sigma)
    ref = discrete_reference(profile, grid)
    u = state.u

    w = u / ref
    carrying = u * grid.volumes > H_MASS_CUT * params.M
    if not np.any(carrying):
        carrying = np.ones_like(w, dtype=bool)
    h1 = float(np.min(w[carrying]))
    h2 = float(np.max(w[carrying]))
    h = max(h2, 1.0 / h1)

    F = relative_entropy(u, profile, grid)
    I = relative_fisher(u, state.sigma, params, grid)

    diff = u - ref                      # = f·B^{2−m}
    r0 = abs(float(np.dot(diff, grid.volumes)))
    r1 = abs(float(np.dot(diff, grid.first_moment_weights)))
    r1_scale = float(np.dot(np.abs(diff), np.abs(grid.first_moment_weights)))
    r2 = abs(float(np.dot(diff, grid.second_moment_weights)))

    beta = ref ** (m - 1.0)
    f = (w - 1.0) * beta
    q_f2 = float(np.dot(f * f * ref ** (2.0 - m), grid.volumes))
    df = np.diff(grid.centers)
    grad = np.diff(f) / df
    B_face = profile.density(grid.edges[1:-1])
    q_grad = float(np.dot(grid.face_areas * B_face, grad * grad * df))

    consts = profile.constants
    m2 = grid.second_moment(u)
    k = (m2 + params.M * consts.C_M) / (consts.K_M + params.M * consts.C_M)

    return EntropyReport(
        params=params,
        t=float(state.t),
        tau=float(state.tau),
        R=float(state.R),
        sigma=float(state.sigma),
        F=F,
        I=I,
        E=F,
        h1=h1,
        h2=h2,
        h=float(h),
        X=float(h ** (5.0 - 2.0 * m) - 1.0),
        Y=float(d * (1.0 - m) * (h ** (4.0 * (2.0 - m)) - 1.0)),
        mass=grid.mass(u),
        second_moment=m2,
        center_of_mass=grid.first_moment(u) / params.M,
        r0=r0,
        r1=r1,
        r2=r2,
        r1_scale=r1_scale,
        k=float(k),
        q_f2=q_f2,
        q_grad=q_grad,
        mode=state.mode,
    )


# ----------------------------------------------------------------------------
# identity checks on a run's step log
# ----------------------------------------------------------------------------

def _as_log(track, params):
    """Accept a RunResult-like object or explicit (t, σ, F, I) arrays."""
    if hasattr(track, "t") and hasattr(track, "F"):
        p = params if params is not None else track.final_state.params
        return np.asarray(track.t), np.asarray(track.sigma), \
            np.asarray(track.F), np.asarray(track.I), p
    t, s, F, I = (np.asarray(a, dtype=float) for a in track)
    if params is None:
        raise ValueError("explicit arrays need params")
    return t, s, F, I, params


def production_identity_check(track, params: ModelParams | None = None) -> float:
    """Max relative defect of dF/dt = −m(1−m)σ^p I along a step log.

    Centered differences of F at step resolution against the pointwise
    production term.  The defect is the backward-Euler bias, first order in
    Δt: halving a fixed Δt should halve the returned value (±30%).  Requires
    at least 3 log entries.
    """
    t, s, F, I, p = _as_log(track, params)
    if t.size < 3:
        raise ValueError("need at least 3 consecutive log entries")
    dFdt = (F[2:] - F[:-2]) / (t[2:] - t[:-2])
    prod = p.m * (1.0 - p.m) * s[1:-1] ** p.p * I[1:-1]
    denom = np.maximum(np.abs(dFdt), 1e-300)
    return float(np.max(np.abs(dFdt + prod) / denom))


def sigma_ode_check(track, params: ModelParams | None = None) -> float:
    """Relative defect of dσ/dt = −(2d(1−m)²/(m K_M)) σ^p F over a step log.

    Integrated form: |Δσ + ∫rhs dt| / |Δσ| with a trapezoid over the log.
    The pointwise σ increments hit the O(h²) spatial floor of the matching
    fixed point long before the time error does, so the integrated defect is
    the form that exhibits clean first-order behavior in Δt.
    """
    t, s, F, _, p = _as_log(track, params)
    if t.size < 3:
        raise ValueError("need at least 3 consecutive log entries")
    K_M = barenblatt_constants(p).K_M
    rhs = (2.0 * p.d * (1.0 - p.m) ** 2 / (p.m * K_M)) * s ** p.p * F
    dsig = s[-1] - s[0]
    integral = trapezoid(rhs, t)
    return float(abs(dsig + integral) / max(abs(dsig), 1e-12 * s[0]))


# ----------------------------------------------------------------------------
# inequality monitors
# ----------------------------------------------------------------------------

@dataclass(frozen=True)
class BoundsCheck:
    """Verdicts of the three displayed inequalities at one snapshot.

    ``interpolation`` is None when the gate h < h* fails (the bound is not
    applicable there, which is different from failing).  Truthiness means
    everything applicable holds.
    """

    sandwich: bool
    fisher_bound: bool
    interpolation: bool | None
    h_star: float
    sandwich_lower: float
    sandwich_mid: float
    sandwich_upper: float
    fisher_lhs: float
    fisher_rhs: float
    interpolation_lhs: float
    interpolation_rhs: float

    def __bool__(self) -> bool:
        ok = self.sandwich and self.fisher_bound
        return ok and (self.interpolation is not False)


def bounds_check(report: EntropyReport) -> BoundsCheck:
    """Check sandwich, Fisher bound and gated interpolation inequality.

    The interpolation bound presumes the improved gap constant, which is
    available only under the moment-matching orthogonality; on self_similar
    snapshots (and whenever h ≥ h*) it is reported as not applicable (None)
    rather than failed.  Sandwich and Fisher bounds hold unconditionally.
    """
    p = report.params
    m, d = p.m, p.d
    h, X, Y = report.h, report.X, report.Y
    lower = h ** (m - 2.0) * report.q_f2
    mid = (2.0 / m) * report.F
    upper = h ** (2.0 - m) * report.q_f2
    tiny = 1e-300
    sandwich = (lower <= mid * (1.0 + SANDWICH_SLACK) + tiny) and (
        mid <= upper * (1.0 + SANDWICH_SLACK) + tiny
    )
    fisher_rhs = (1.0 + X) * report.I + Y * report.q_f2
    fisher = report.q_grad <= fisher_rhs * (1.0 + FISHER_SLACK) + tiny

    Lambda, _ = lambda_improved(p.alpha, d)
    h_star = (1.0 + Lambda / (report.sigma * d * (1.0 - m))) ** (1.0 / (4.0 * (2.0 - m)))
    if h < h_star and report.mode == "matched":
        interp_rhs = (
            h ** (2.0 - m) * (1.0 + X) / (2.0 * (Lambda - report.sigma * Y))
            * m * report.sigma ** p.p * report.I
        )
        interpolation = report.F <= interp_rhs * (1.0 + INTERPOLATION_SLACK) + tiny
    else:
        interp_rhs = np.nan
        interpolation = None
    return BoundsCheck(
        sandwich=bool(sandwich),
        fisher_bound=bool(fisher),
        interpolation=interpolation,
        h_star=float(h_star),
        sandwich_lower=float(lower),
        sandwich_mid=float(mid),
        sandwich_upper=float(upper),
        fisher_lhs=float(report.q_grad),
        fisher_rhs=float(fisher_rhs),
        interpolation_lhs=float(report.F),
        interpolation_rhs=float(interp_rhs),
    )


@dataclass(frozen=True)
class OrthogonalityCheck:
    """Moment-discrepancy residuals with their budgets; truthiness = all pass."""

    r0: float
    r1: float
    r2: float
    tol0: float
    tol1: float
    tol2: float

    def __bool__(self) -> bool:
        return bool(
            self.r0 <= self.tol0 and self.r1 <= self.tol1 and self.r2 <= self.tol2
        )


def orthogonality_check(report: EntropyReport) -> OrthogonalityCheck:
    """Residuals |∫f B^{2−m}|, |∫x f B^{2−m}|, |∫|x|² f B^{2−m}| vs budgets.

    Mass and second moment vanish by construction (normalized reference and
    matched σ), budgeted at roundoff; the first moment carries the scheme's
    O(h²) center-of-mass transient, budgeted relative to its L¹ scale plus an
    absolute allowance ~ M√σ.  Meaningful in matched mode; in self_similar
    mode the second residual is generically nonzero, which is the entire
    point of moment matching.
    """
    p = report.params
    K_M = barenblatt_constants(p).K_M
    return OrthogonalityCheck(
        r0=report.r0,
        r1=report.r1,
        r2=report.r2,
        tol0=R0_TOL_FACTOR * p.M,
        tol1=float(R1_REL * report.r1_scale
                   + R1_ABS_FACTOR * p.M * np.sqrt(report.sigma)),
        tol2=R2_TOL_FACTOR * report.sigma * K_M,
    )


# ----------------------------------------------------------------------------
# σ scan
# ----------------------------------------------------------------------------

@dataclass(frozen=True)
class MinimizerScan:
    """Brute-force σ-scan of F_σ[u] with the matched scale and its residual."""

    sigmas: np.ndarray
    F_values: np.ndarray
    argmin: float
    sigma_star: float
    derivative_residual: float


def minimizer_scan(
    params: ModelParams,
    grid,
    u: np.ndarray,
    sigma_range: tuple[float, float],
    n_points: int = 64,
) -> MinimizerScan:
    """Scan σ ↦ F_σ[u] and locate the minimizer.

    The matched scale σ* must lie strictly inside ``sigma_range`` (BracketMiss
    otherwise); the scan's argmin must agree with σ* within one scan cell.
    The derivative residual is |dF/dσ| at σ*, from the quadratic through the
    three scan points nearest σ*, normalized by the mean |dF/dσ| across the
    scan: the stationarity of the matched scale makes it vanish up to scan
    resolution.
    """
    lo, hi = sigma_range
    if not (0 < lo < hi):
        raise ValueError(f"need 0 < lo < hi, got {sigma_range}")
    if n_points < 5:
        raise ValueError("need at least 5 scan points")
    sigma_star = matched_sigma(params, grid, u, guess=np.sqrt(lo * hi))
    if not (lo < sigma_star < hi):
        raise BracketMiss(
            f"matched scale σ*={sigma_star:.6g} outside scan range ({lo:.6g}, {hi:.6g})"
        )
    sigmas = np.linspace(lo, hi, n_points)
    F_values = np.array([
        relative_entropy(u, BarenblattProfile(params, sigma=s), grid) for s in sigmas
    ])
    argmin = float(sigmas[int(np.argmin(F_values))])

    j = int(np.clip(np.searchsorted(sigmas, sigma_star), 1, n_points - 2))
    ss = sigmas[j - 1:j + 2]
    Fs = F_values[j - 1:j + 2]
    coeff = np.polyfit(ss - sigma_star, Fs, 2)
    deriv = float(coeff[1])                  # dF/dσ at σ* from the local quadratic
    spread = float(np.max(F_values) - np.min(F_values))
    scale = spread / (hi - lo) if spread > 0 else 1.0
    return MinimizerScan(
        sigmas=sigmas,
        F_values=F_values,
        argmin=argmin,
        sigma_star=float(sigma_star),
        derivative_residual=abs(deriv) / max(scale, 1e-300),
    )


# ----------------------------------------------------------------------------
# rate fitting
# ----------------------------------------------------------------------------

@dataclass(frozen=True)
class RateFit:
    """Least-squares decay rate of log F with its theoretical companions.

    ``slope`` is −d log F/dt (positive for decay).  The R-exponent convention:
    rates in t are twice the exponents in R, because t = ½ log R; every slope
    reported here is a t-rate.
    """

    t_window: tuple[float, float]
    slope: float
    two_gamma_improved: float
    two_gamma_baseline: float | None
    sigma_inf: float
    C_inf: float
    r_gamma_E_max: float
    e_folds: float
    n_points: int
    convention: str = RATE_CONVENTION


def _reports_of(track) -> list[EntropyReport]:
    if hasattr(track, "snapshots"):
        return [rep for _, rep in track.snapshots]
    return list(track)


def fit_rate(track, window: tuple[float, float] | None = None) -> RateFit:
    """Fit the late-time decay rate of F and compare with the rate tables.

    The window defaults to the largest late interval where h−1 < 10⁻² (the
    asymptotic regime) and F sits above its roundoff floor; explicit windows
    override.  InsufficientDecay if F decays by fewer than 2 e-folds inside
    the window.  Also reports max R^γ E over the window (the boundedness proxy
    for the original-variable statement), σ_∞ and the derived front constant
    C_∞ = (2θ)^{1/θ}/√σ_∞.
    """
    reports = _reports_of(track)
    if len(reports) < 3:
        raise ValueError("need at least 3 snapshots to fit a rate")
    params = reports[0].params
    t = np.array([r.t for r in reports])
    F = np.array([r.F for r in reports])
    h = np.array([r.h for r in reports])
    sig = np.array([r.sigma for r in reports])

    if window is None:
        floor = FIT_FLOOR_FACTOR * float(np.max(F))
        usable = (h - 1.0 < FIT_H_THRESHOLD) & (F > floor)
        idx = np.nonzero(usable)[0]
        if idx.size < 3:
            raise InsufficientDecay(
                "no late-time window with h−1 < 1e−2 and F above the roundoff floor"
            )
        # largest contiguous tail of usable snapshots
        start = idx[-1]
        while start - 1 in idx:
            start -= 1
        sel = np.arange(start, idx[-1] + 1)
    else:
        ta, tb = window
        sel = np.nonzero((t >= ta) & (t <= tb))[0]
        if sel.size < 3:
            raise ValueError(f"window {window} contains fewer than 3 snapshots")
    tw, Fw, sw = t[sel], F[sel], sig[sel]
    if np.any(Fw <= 0):
        raise InsufficientDecay("F touches zero inside the fit window")
    e_folds = float(np.log(Fw[0] / Fw[-1]))
    if e_folds < FIT_MIN_EFOLDS:
        raise InsufficientDecay(
            f"only {e_folds:.2f} e-folds of decay in window "
            f"[{tw[0]:.3f}, {tw[-1]:.3f}] (need ≥ {FIT_MIN_EFOLDS})"
        )
    A = np.vstack([tw, np.ones_like(tw)]).T
    coef, *_ = np.linalg.lstsq(A, np.log(Fw), rcond=None)
    slope = -float(coef[0])

    gi, _ = gamma_improved(params.d, params.m)
    try:
        gb, _ = gamma_baseline(params.d, params.m)
        two_gb = 2.0 * gb
    except UnsupportedExponent:
        two_gb = None
    theta = params.theta
    sigma_inf = float(sw[-1])
    C_inf = (2.0 * theta) ** (1.0 / theta) / np.sqrt(sigma_inf)
    r_gamma_E = np.exp(2.0 * gi * tw) * Fw
    return RateFit(
        t_window=(float(tw[0]), float(tw[-1])),
        slope=slope,
        two_gamma_improved=2.0 * gi,
        two_gamma_baseline=two_gb,
        sigma_inf=sigma_inf,
        C_inf=float(C_inf),
        r_gamma_E_max=float(np.max(r_gamma_E)),
        e_folds=e_folds,
        n_points=int(sel.size),
    )


def k_ratio(report: EntropyReport) -> float:
    """𝗄 = (∫|x|²u + M C_M)/(K_M + M C_M); equals 1 at the σ=1 profile and
    |𝗄−1| decays exponentially along self-similar-mode runs (rate reported by
    trajectory fits, not asserted)."""
    return report.k


# ----------------------------------------------------------------------------
# CSV emission
# ----------------------------------------------------------------------------

REPORT_CSV_HEADER = (
    "t", "tau", "R", "sigma", "F", "I", "h", "second_moment",
    "center_of_mass", "r0", "r1", "r2", "k",
)


def write_report_csv(path, reports: Sequence[EntropyReport]) -> None:
    """Per-run snapshot report as CSV; floats via repr for bit-stable files."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(REPORT_CSV_HEADER)
        for r in reports:
            writer.writerow([
                repr(r.t), repr(r.tau), repr(r.R), repr(r.sigma), repr(r.F),
                repr(r.I), repr(r.h), repr(r.second_moment),
                repr(r.center_of_mass), repr(r.r0), repr(r.r1), repr(r.r2),
                repr(r.k),
            ])
