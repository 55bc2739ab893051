"""Exception hierarchy.

Two families matter to callers: ``ModelValidationError`` (bad input, a
violated modelling hypothesis) and ``NumericalError`` (a computation that
did not produce a trustworthy number). The CLI maps them to exit codes 2
and 3.
"""


class EpiRegionError(Exception):
    pass


class ModelValidationError(EpiRegionError, ValueError):
    pass


class NumericalError(EpiRegionError, ArithmeticError):
    pass


# grid
class RegionTouchesBoundary(ModelValidationError):
    pass


class EmptyRegion(ModelValidationError):
    pass


# models
class CapacityExceeded(ModelValidationError):
    pass


class StepTooLarge(NumericalError):
    pass


# integrator
class LinearSolveFailure(NumericalError):
    pass


class NormUnderflow(NumericalError):
    pass


class NotConverged(NumericalError):
    def __init__(self, message, residual=None):
        super().__init__(message)
        self.residual = residual


# spectral
class NoConvergence(NotConverged):
    pass


class NonPositiveEigenvector(NumericalError):
    pass


class NonPositiveMultiplier(NumericalError):
    pass


class ZetaTooSmall(NumericalError):
    pass


# control
class MissingDenseTrajectory(ModelValidationError):
    pass


class ComplementDisconnectedWarning(UserWarning):
    """The grid complement of the control region splits into several pieces."""


# scenarios
class ParseError(ModelValidationError):
    """Malformed scenario file; ``where`` is a line number or a field path."""

    def __init__(self, message, where=None):
        super().__init__(message if where is None else f"{where}: {message}")
        self.where = where


class ValidationError(ModelValidationError):
    """Scenario parses but violates a modelling hypothesis or a numerical bound."""
