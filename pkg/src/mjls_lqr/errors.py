"""Exception hierarchy.

Errors split into two families that the CLI maps onto exit codes:
input problems (:class:`ValidationError` and subclasses, exit 2) and
numerical failures (:class:`NumericalError` and subclasses, exit 3).
"""


class MJLSError(Exception):
    """Base class for all package errors."""


class ValidationError(MJLSError, ValueError):
    """Invalid user input. ``field`` names the offending entry when known."""

    def __init__(self, message, field=None):
        self.field = field
        if field:
            message = f"{field}: {message}"
        super().__init__(message)


class ShapeError(ValidationError):
    pass


class SubspaceError(ValidationError):
    """A collection has nonzero components outside the visited set."""


class InvalidDistributionError(ValidationError):
    pass


class TimeRangeError(ValidationError):
    pass


class NumericalError(MJLSError, ArithmeticError):
    pass


class FactorizationError(NumericalError):
    def __init__(self, mode, message="input weight is not positive definite"):
        self.mode = mode
        super().__init__(f"mode {mode + 1}: {message}")


class DivergenceError(NumericalError):
    def __init__(self, time, message="non-finite values encountered"):
        self.time = time
        super().__init__(f"{message} at t={time:.6g}")
