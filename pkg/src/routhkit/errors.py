"""Exception hierarchy shared by every module."""


class RouthError(Exception):
    """Base class for all errors raised by routhkit."""


class StructureError(RouthError):
    """Operands belong to incompatible models (wrong group, wrong dimension)."""


class DomainError(RouthError):
    """A chart point lies outside the chart domain."""


class NumericError(RouthError):
    """Non-finite value encountered during evaluation or integration."""

    def __init__(self, message, point=None, time=None):
        super().__init__(message)
        self.point = point
        self.time = time


class SingularMatrixError(NumericError):
    """LU pivot fell below the singularity threshold."""


class ConvergenceError(NumericError):
    """Newton iteration did not converge."""

    def __init__(self, message, residual=None, point=None):
        super().__init__(message, point=point)
        self.residual = residual


class HyperregularityError(NumericError):
    """A block required to solve the Euler-Lagrange equations is singular."""

    def __init__(self, message, block, point=None):
        super().__init__(message, point=point)
        self.block = block


class RegularityError(NumericError):
    """The momentum shift map is not invertible (the system is not G-regular)."""


class ConsistencyError(RouthError):
    """A quantity that should be point-independent varies between sample points."""


class ConfigurationError(RouthError):
    """Invalid scenario, chart or plan data."""

    def __init__(self, message, violations=()):
        super().__init__(message)
        self.violations = list(violations)
