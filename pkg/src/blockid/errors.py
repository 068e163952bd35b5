"""Exception hierarchy shared across the identification toolkit."""


class BlockIdError(Exception):
    """Base class for all toolkit errors."""


class ConfigError(BlockIdError):
    """Invalid or unknown configuration key/value."""


class SchemaError(BlockIdError):
    """A file exists and parses but violates the expected schema."""


class ParseError(BlockIdError):
    """A file could not be parsed; carries the offending line number."""

    def __init__(self, message, line=None):
        super().__init__(message)
        self.line = line


class SingularMatrixError(BlockIdError):
    """Least-squares regressor matrix is rank deficient."""


class NumericalBreakdownError(BlockIdError):
    """Recursive estimator covariance lost positive definiteness."""


class NonMonotonicError(BlockIdError):
    """A piecewise-linear map required to be monotonic is not."""


class DegenerateSegmentError(BlockIdError):
    """Inversion hit a segment with (numerically) zero slope."""


class SensitivityError(BlockIdError):
    """Wiener-side identification lost monotonicity of the working output map.

    Carries the iteration index at which the working nonlinearity broke.
    """

    def __init__(self, message, iteration=None):
        super().__init__(message)
        self.iteration = iteration


class NormalizationError(BlockIdError):
    """Linear block has (numerically) zero steady-state gain."""
