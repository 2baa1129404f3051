"""Exception hierarchy shared by all stages."""


class EoeError(Exception):
    """Base class for every error raised by this package."""


class ConfigError(EoeError, ValueError):
    """Invalid configuration or invalid arguments."""


class SchemaError(ConfigError):
    """A data file does not follow the expected schema.

    ``row`` is the 1-based line number of the offending row when known.
    """

    def __init__(self, message, row=None):
        if row is not None:
            message = f"row {row}: {message}"
        super().__init__(message)
        self.row = row


class DegenerateGeometryError(EoeError, ValueError):
    """Two points that must be distinct coincide."""


class NumericalError(EoeError, ArithmeticError):
    """A numerical stage failed."""


class IllConditionedError(NumericalError):
    """Cholesky factorisation failed even after the maximum jitter."""


class InsufficientPathsError(NumericalError):
    """Too few paths to identify the receiver state."""


class NoConsensusError(NumericalError):
    """No RANSAC candidate gathered enough inliers."""
