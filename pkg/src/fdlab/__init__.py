"""fdlab: a numerical laboratory for moment-matched fast-diffusion rescaling.

The package studies the fast diffusion equation ∂v/∂τ = Δv^m on ℝ^d in the
mass-preserving exponent range, rewritten in self-similar variables so that
the long-time attractor becomes a stationary profile.  Its parts:

* :mod:`fdlab.exponents`:   critical exponents, scaling rates, and the two
  convergence-rate tables (baseline and moment-matched) in closed form.
* :mod:`fdlab.spectral`:    the weighted linearization spectrum: explicit
  eigenvalue ladders, spectral-bottom selectors, and a discretized
  Rayleigh-quotient verifier with orthogonality constraints.
* :mod:`fdlab.barenblatt`:  stationary profiles, their normalization and
  moment constants, and the mass-matched comparator family.
* :mod:`fdlab.dynamics`:    a conservative finite-volume solver for the
  rescaled flow with the moment-matched (σ-adaptive) reference.
* :mod:`fdlab.diagnostics`: relative entropy and Fisher information,
  identity and inequality monitors, rate fitting, σ-scan minimization.
* :mod:`fdlab.harness`:     YAML-configured CLI and the acceptance suite.
"""

__version__ = "0.1.0"

from .errors import (
    BracketMiss,
    ConfigError,
    DivergentSecondMoment,
    FdlabError,
    InsufficientDecay,
    NegativeDensity,
    NewtonDivergence,
    NoDiscreteEigenvalue,
    NonFiniteMoment,
    PositivityLoss,
    UnsupportedAlpha,
    UnsupportedExponent,
)
from .exponents import (
    BarenblattConstants,
    CriticalExponents,
    ModelParams,
    RateTable,
    barenblatt_constants,
    critical_exponents,
    gamma_baseline,
    gamma_improved,
    rate_table,
)
from .spectral import (
    RayleighProblem,
    RayleighResult,
    SpectrumTable,
    continuous_bottom,
    eigenvalue,
    enumerated_gap,
    gaussian_limit_check,
    lambda_improved,
    lambda_sharp,
    rayleigh_estimate,
    rayleigh_lowest,
    scaled_gap_check,
    sector_essential_bottom,
    spectrum_table,
)
from .barenblatt import (
    BarenblattProfile,
    SelfSimilarComparator,
    discrete_reference,
    matched_sigma,
    self_similar_evaluate,
    stationarity_residual,
)
from .dynamics import (
    Grid,
    InitialDatum,
    RunResult,
    SolutionState,
    init_state,
    line_grid,
    load_checkpoint,
    radial_grid,
    run,
    save_checkpoint,
    step,
    truncation_radius_for,
)
from .diagnostics import (
    EntropyReport,
    MinimizerScan,
    RateFit,
    bounds_check,
    entropy_report,
    fit_rate,
    k_ratio,
    minimizer_scan,
    orthogonality_check,
    production_identity_check,
    relative_entropy,
    relative_fisher,
    sigma_ode_check,
)
from .harness import (
    ComparisonReport,
    ExperimentConfig,
    case_gamma_curves,
    comparison_report,
    load_config,
    main,
)

__all__ = [name for name in dir() if not name.startswith("_")]
