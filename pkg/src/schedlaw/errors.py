"""Exception hierarchy shared by all modules.

The CLI maps :class:`ValidationError` to exit status 1 and
:class:`NumericError` to exit status 2.
"""


class SchedlawError(Exception):
    """Base class for every error raised by the package."""


class ValidationError(SchedlawError, ValueError):
    """An input failed validation (bad field, bad file, out-of-domain value)."""


class DomainError(ValidationError):
    """A numeric argument lies outside the domain of the operation."""


class NotDerivedError(ValidationError):
    """No closed form exists for the requested schedule kind."""


class NumericError(SchedlawError, ArithmeticError):
    """A numerical procedure could not produce a finite answer."""


class DegenerateScheduleError(NumericError):
    """The learning-rate prefix sum is zero, so every bound is infinite."""


class SingularityError(NumericError):
    """A suffix sum in the last-iterate bound vanished even after flooring."""

    def __init__(self, message, k=None):
        super().__init__(message)
        self.k = k


class QuadratureError(NumericError):
    """Adaptive quadrature failed to reach the requested tolerance."""


class InsufficientDataError(NumericError):
    """Too few usable points to fit."""


class SplitError(InsufficientDataError):
    """The held-out segment of a fit/predict split is too short."""


class SingularScheduleError(NumericError):
    """The exam integrand is not integrable near the end of training."""
