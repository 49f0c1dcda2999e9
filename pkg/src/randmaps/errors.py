"""Exception types raised across the package."""


class RandMapsError(Exception):
    """Base class."""


class TemplateError(RandMapsError, ValueError):
    pass


class ZeroDerivative(RandMapsError):
    """A map has a critical point (``T'`` vanishes)."""


class AssumptionViolated(RandMapsError):
    """The moment condition ``<lam^-2> < 1`` (or finite ``<Delta^2>``) fails."""

    def __init__(self, message, moment=None, value=None, report=None):
        super().__init__(message)
        self.moment = moment
        self.value = value
        self.report = report


class GridMismatch(RandMapsError, ValueError):
    pass


class InversionFailure(RandMapsError):
    """A branch solve did not converge."""


class NegativeMass(RandMapsError):
    """Interpolation produced more negative mass than the clamp budget allows."""


class RenormalizationDrift(RandMapsError):
    """Mass drift of a pushforward exceeded its budget."""


class NonpositiveDensity(RandMapsError):
    pass


class NoConvergence(RandMapsError):
    def __init__(self, message, residual=None, iterations=None):
        super().__init__(message)
        self.residual = residual
        self.iterations = iterations


class BranchMismatch(RandMapsError):
    pass


class InfiniteMoment(RandMapsError):
    pass


class InvalidThreshold(RandMapsError, ValueError):
    def __init__(self, message, minimal_K=None):
        super().__init__(message)
        self.minimal_K = minimal_K


class ClassViolation(RandMapsError):
    """An initial density is outside the required log-Holder class."""


class HorizonExceeded(RandMapsError):
    pass


class FitDegenerate(RandMapsError):
    """Too few usable points to fit an exponential rate."""

    def __init__(self, message, values=None):
        super().__init__(message)
        self.values = values


class TailNotConverged(RandMapsError):
    pass


class SeriesDiverged(RandMapsError):
    pass


class DegenerateDirection(RandMapsError):
    """``v^T Sigma^2 v`` is numerically zero; use the coboundary detector."""


class ConfigError(RandMapsError):
    pass
