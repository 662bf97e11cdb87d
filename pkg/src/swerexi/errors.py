"""Exception hierarchy shared across the package."""


class SwerexiError(Exception):
    """Base class for all package errors."""


class ConfigurationError(SwerexiError):
    """Inconsistent grid, truncation, or run configuration."""


class DataError(SwerexiError):
    """Non-finite or otherwise unusable field data."""


class StepperParseError(SwerexiError):
    """Malformed time-stepper identifier string."""


class ContourError(SwerexiError):
    """Misconfigured rational-approximation contour (e.g. overflow at a node)."""


class SolverError(SwerexiError):
    """Singular or numerically unusable shifted linear system."""


class DivergenceError(SwerexiError):
    """Time integration blew up (non-finite state or runaway amplitude)."""
