"""Exception types shared across the package."""


class KacStroockError(Exception):
    """Base class for all package-specific errors."""


class InvalidArgumentError(KacStroockError, ValueError):
    """An argument is outside the documented domain of an operation."""


class UnsupportedParameterError(InvalidArgumentError):
    """A parameter value has no defined formula (e.g. the X^H covariance at H=1)."""


class InvalidCombinationError(InvalidArgumentError):
    """Inputs that must share provenance or be complementary do not match."""


class OutOfHorizonError(KacStroockError):
    """A Poisson path was queried beyond the horizon it was generated for."""


class SingularPointError(KacStroockError):
    """A kernel was evaluated exactly at a point where it diverges."""


class BudgetExceededError(KacStroockError):
    """A node or event budget was exhausted before the requested accuracy.

    Carries a ``diagnostics`` dict with whatever partial information the
    failing stage collected (expected event counts, nodes used, panel counts).
    """

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = dict(diagnostics or {})


class DegenerateSampleError(KacStroockError):
    """A statistic that needs sample variation was given a constant sample."""


class OracleConvergenceError(KacStroockError):
    """The quadrature oracle could not reach the requested tolerance."""
