"""Exception types shared across the package."""


class MortkitError(Exception):
    """Base class for all package-specific errors."""


class ParseError(MortkitError):
    """A data file is malformed; the message names the file and line."""


class ValidationError(MortkitError):
    """Inputs violate a documented precondition or invariant."""


class ConvergenceError(MortkitError):
    """An iterative fit failed to converge; carries the last iterate.

    Attributes
    ----------
    last_iterate : object or None
        Parameter state at the point the iteration gave up.
    """

    def __init__(self, message, last_iterate=None):
        super().__init__(message)
        self.last_iterate = last_iterate


class ConfigError(MortkitError):
    """A run configuration is invalid, ambiguous or incomplete."""
