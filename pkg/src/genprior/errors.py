"""Exception types shared across the package."""


class UnsupportedOperationError(Exception):
    """Raised when an operation does not apply to the given object,
    e.g. asking for the derivative of a non-differentiable link."""


class InsufficientDataError(Exception):
    """Raised when a fit is requested on too few data points."""


class ConfigError(Exception):
    """Raised for invalid run configurations (CLI exit code 2)."""
