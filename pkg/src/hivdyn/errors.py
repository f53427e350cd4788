"""Exception types raised across the package."""

from __future__ import annotations


class HivDynError(Exception):
    """Base class for all package errors."""


class DomainError(HivDynError, ValueError):
    """An argument lies outside the domain of the operation."""


class NonFiniteInputError(HivDynError, ValueError):
    """A state or parameter contains NaN or infinity."""


class InfeasibleSteadyStateError(HivDynError, ValueError):
    """The pretreatment steady state has no persistent virus (R0 <= 1)."""


class ConvergenceError(HivDynError, RuntimeError):
    """The integrator ran out of its step budget."""


class DivergenceError(HivDynError, RuntimeError):
    """The integrated state became non-finite."""


class EvaluationError(HivDynError, RuntimeError):
    """A model output could not be evaluated (e.g. log of a nonpositive load)."""


class LinAlgError(HivDynError, RuntimeError):
    """A matrix expected to be positive definite was not."""


class ChainAbortError(HivDynError, RuntimeError):
    """The sampler hit an unrecoverable error.

    ``iteration`` is the sweep index at which the failure occurred and
    ``partial`` holds whatever draws were retained up to that point.
    """

    def __init__(self, message: str, iteration: int, partial=None):
        super().__init__(f"{message} (iteration {iteration})")
        self.iteration = iteration
        self.partial = partial


class ParseError(HivDynError, ValueError):
    """A data file row could not be parsed."""

    def __init__(self, path, line: int, message: str):
        super().__init__(f"{path}:{line}: {message}")
        self.path = path
        self.line = line


class JoinError(HivDynError, ValueError):
    """A data file refers to a subject absent from the viral-load file."""


class InsufficientDataError(HivDynError, ValueError):
    """Not enough observations for the requested analysis."""


class UndefinedCorrelationError(HivDynError, ValueError):
    """A rank correlation was requested for a constant vector."""
