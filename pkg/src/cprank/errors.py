"""Exception types raised across the package."""


class CPRankError(Exception):
    """Base class for all package errors."""


class DimensionError(CPRankError, ValueError):
    """Shapes or dimensions do not agree."""


class ModeError(CPRankError, ValueError):
    """Unfolding mode outside {1, 2, 3}."""


class ConfigError(CPRankError, ValueError):
    """Invalid solver or generator configuration."""


class NumericalError(CPRankError, ArithmeticError):
    """A non-finite value appeared during a solve."""

    def __init__(self, message, iteration=None):
        super().__init__(message)
        self.iteration = iteration


class SingularityError(NumericalError):
    """The normal equations could not be factorized."""


class FormatError(CPRankError, ValueError):
    """A file does not follow the expected format."""


class LengthError(FormatError):
    """A tensor file payload is shorter or longer than its header says."""


class SizeError(FormatError):
    """Header dimensions are too large to be addressed."""


class InputError(CPRankError, ValueError):
    """Missing or empty input (e.g. a frame directory without images)."""
