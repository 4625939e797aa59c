"""Exception hierarchy shared by every module."""


class HilferError(Exception):
    """Base class for errors raised by this package."""


class ParameterError(HilferError, ValueError):
    """An argument lies outside the supported range."""


class PoleError(ParameterError):
    """Gamma evaluated at a non-positive integer."""


class EvaluationOverflowError(HilferError, OverflowError):
    """The requested value exceeds double precision range."""


class SingularEvaluationError(ParameterError):
    """A quantity was requested at a point where it is singular."""


class GridMismatchError(ParameterError):
    """Two objects that must share a discretization do not."""


class NumericalFailure(HilferError, ArithmeticError):
    """A verification tolerance was breached or a solve broke down."""
