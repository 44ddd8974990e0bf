"""Exception types shared across the package.

Every error raised on purpose derives from :class:`FdlabError`, so callers can
catch the package's failures without swallowing programming mistakes.
"""


class FdlabError(Exception):
    """Base class for all deliberate failures raised by this package."""


class UnsupportedExponent(FdlabError, ValueError):
    """The diffusion exponent m lies outside the supported open range.

    The laboratory requires m̃₁(d) < m < 1 (with guard bands near both ends):
    below m̃₁ the second moment of the stationary profile diverges and the
    improved rates carry no content; m ≥ 1 is the porous-medium regime.
    """


class DivergentSecondMoment(FdlabError, ValueError):
    """A second moment was requested where it does not converge (m ≤ m̃₁)."""


class UnsupportedAlpha(FdlabError, ValueError):
    """The weight exponent α lies outside the range of the requested constant."""


class NoDiscreteEigenvalue(FdlabError):
    """The constrained Rayleigh minimum is not separated from the essential
    spectrum bottom under domain refinement.

    Attributes
    ----------
    estimate:
        Best available numerical value of the (non-certified) minimum, which in
        these cases approximates the sector essential-spectrum bottom from above.
    """

    def __init__(self, message: str, estimate: float):
        super().__init__(message)
        self.estimate = estimate


class NonFiniteMoment(FdlabError, ValueError):
    """An initial datum has a non-finite mass, first or second moment."""


class NegativeDensity(FdlabError, ValueError):
    """An initial datum is negative (or vanishes) somewhere on the grid."""


class NewtonDivergence(FdlabError, RuntimeError):
    """The implicit-step Newton iteration failed to reach tolerance.

    Attributes
    ----------
    residual:
        Final max-norm residual of the nonlinear system (mass units).
    """

    def __init__(self, message: str, residual: float):
        super().__init__(message)
        self.residual = residual


class PositivityLoss(FdlabError, RuntimeError):
    """The updated density lost strict positivity in some cell (fatal).

    Attributes
    ----------
    cell:
        Index of the first offending cell.
    """

    def __init__(self, message: str, cell: int):
        super().__init__(message)
        self.cell = cell


class BracketMiss(FdlabError, ValueError):
    """A scan range does not bracket the predicted minimizer."""


class InsufficientDecay(FdlabError, RuntimeError):
    """A rate fit was requested on a window with less than two e-folds of decay."""


class ConfigError(FdlabError, ValueError):
    """An experiment configuration failed validation.

    Attributes
    ----------
    field:
        Dotted path of the offending configuration field (e.g. ``params.m``).
    """

    def __init__(self, field: str, message: str):
        super().__init__(f"{field}: {message}")
        self.field = field
