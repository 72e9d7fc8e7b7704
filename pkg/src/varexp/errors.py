"""Exception hierarchy for varexp."""


class VarExpError(Exception):
    """Base class for all errors raised by varexp."""


class AnyValueAtMostOne(VarExpError, ValueError):
    pass


class NonFinite(VarExpError, ValueError):
    pass


class MeshMismatch(VarExpError, ValueError):
    pass


class DegenerateBox(VarExpError, ValueError):
    pass


class BracketFailure(VarExpError, ArithmeticError):
    pass


class NonzeroBoundary(VarExpError, ValueError):
    pass


class BothZero(VarExpError, ValueError):
    pass


class ZeroDenominator(VarExpError, ZeroDivisionError):
    pass


class NoMountainRidge(VarExpError):
    pass


class NoValley(VarExpError):
    pass


class MaxIter(VarExpError):
    """Iteration budget exhausted; ``report`` holds the last iterate."""

    def __init__(self, message, report=None):
        super().__init__(message)
        self.report = report


class DegenerateCollapse(VarExpError):
    """The path maximum fell below the mountain ridge level."""

    def __init__(self, message, report=None):
        super().__init__(message)
        self.report = report


class OddnessRequired(VarExpError, ValueError):
    pass


class LadderTooLarge(VarExpError, ValueError):
    pass


class ConfigError(VarExpError, ValueError):
    pass


class SingularOriginWarning(RuntimeWarning):
    """A power-type kernel was evaluated at s = 0 with p(x) < 2."""
