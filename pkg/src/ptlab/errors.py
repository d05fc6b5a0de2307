"""Exception and warning types shared across the package."""

from __future__ import annotations


class PTLabError(Exception):
    """Base class for every error raised by ptlab."""


class DomainError(PTLabError, ValueError):
    """A time-varying gain was evaluated outside its horizon."""


class ValidationError(PTLabError, ValueError):
    """Parameters violate a stated range; ``violations`` lists each one."""

    def __init__(self, violations):
        if isinstance(violations, str):
            violations = [violations]
        self.violations = list(violations)
        super().__init__("; ".join(self.violations))


class ConfigurationError(ValidationError):
    """A controller was paired with a plant it cannot handle."""


class UndefinedBoundError(ValidationError):
    """A closed-form settling bound has no value for these parameters."""


class UnsupportedError(PTLabError):
    """The operation is not defined for this kind of input."""


class NumericError(PTLabError, ArithmeticError):
    """Integration produced a non-finite value.

    ``t`` and ``state`` hold the time and state at the start of the
    offending step when they are known.
    """

    def __init__(self, message, t=None, state=None):
        self.t = t
        self.state = state
        super().__init__(message)


class InternalError(PTLabError, AssertionError):
    """An internal consistency contract was violated."""


class HypothesisWarning(UserWarning):
    """A modelling hypothesis is not met; the computation still proceeds."""
