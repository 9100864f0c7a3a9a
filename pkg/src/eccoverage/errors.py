"""Exception types shared across the package."""


class ECError(Exception):
    """Base class for all errors raised by eccoverage."""


class DegenerateGenerators(ECError):
    """Two generator points coincide, so no bisector separates them."""


class OutOfDomain(ECError):
    """A point that must lie in the domain does not."""


class NumericalBreakdown(ECError):
    """A Cholesky pivot was non-positive during a factor update."""


class MeasurementCapExceeded(ECError):
    """The measurement archive would grow past its configured cap."""


class EmptyGrid(ECError):
    """No grid node falls inside the domain."""


class ZeroMass(ECError):
    """A region carries no positive density on the evaluation grid."""


class NonConvergence(ECError):
    """An iteration hit its cap before meeting its stopping rule.

    The last iterate is kept on ``positions`` so callers can still use it.
    """

    def __init__(self, message, positions=None, iterations=None):
        super().__init__(message)
        self.positions = positions
        self.iterations = iterations


class ConfigError(ECError, ValueError):
    """A configuration violates one of its invariants."""


class InvalidAlpha(ConfigError):
    """Regularization decay exponent outside the open interval (0, 1/2)."""
