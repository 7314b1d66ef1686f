"""Exception types raised across the package."""


class BerkNashError(Exception):
    """Base class for all package errors."""


class ConfigError(BerkNashError, ValueError):
    """Malformed or incomplete model document.

    ``path`` is the dotted key that failed, when known.
    """

    def __init__(self, message, path=None):
        self.path = path
        if path:
            message = f"{path}: {message}"
        super().__init__(message)


class DomainError(BerkNashError, ValueError):
    """A value lies outside its admissible domain (e.g. discount >= 1)."""


class RangeError(BerkNashError, IndexError):
    """A tabulated kernel was queried outside its grid."""


class ShapeError(BerkNashError, ValueError):
    """Array arguments have incompatible shapes."""


class TruncationError(BerkNashError):
    """A truncation level carries zero kernel mass for some (s, x)."""

    def __init__(self, message, level=None, state=None, action=None):
        self.level = level
        self.state = state
        self.action = action
        super().__init__(message)


class NoDominatingParameterError(BerkNashError):
    """Every parameter on the grid has infinite weighted divergence."""


class ContractionError(BerkNashError, ArithmeticError):
    """Value iteration stopped contracting."""


class NonConvergenceError(BerkNashError):
    """An iterative solve hit its iteration cap; ``residual`` is the last error."""

    def __init__(self, message, residual=None, result=None):
        self.residual = residual
        self.result = result
        super().__init__(message)


class ImpossibleObservationError(BerkNashError):
    """Every parameter in the belief's support assigns zero mass to an observed transition."""
