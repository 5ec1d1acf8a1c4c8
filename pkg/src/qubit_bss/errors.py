"""Exception hierarchy shared by every module of the package."""

import numpy as np


class QubitBSSError(Exception):
    """Base class for all package errors."""


class DomainError(QubitBSSError, ValueError):
    """An input lies outside the valid domain of the mixing model.

    Attributes:
        field: name of the offending quantity (``"r1"``, ``"v"``, ...).
        index: indices of offending samples for batched input, else ``None``.
    """

    def __init__(self, message, field=None, index=None):
        super().__init__(message)
        self.field = field
        self.index = None if index is None else np.atleast_1d(index)


class SingularMixture(DomainError):
    """r1 and r2 coincide (or nearly): the Jacobian vanishes."""


class InvalidObservation(DomainError):
    """Recovered amplitudes fall outside (0, 1)."""


class InconsistentObservation(DomainError):
    """p3 cannot be produced by any phase at the queried coupling."""


class NearSingularPhase(DomainError):
    """cos(delta) is too close to zero for the derivative formulas."""


class OutOfSupport(DomainError):
    """A source value lies outside the support of its prior."""


class DomainTooTight(DomainError):
    """A finite-difference stencil leaves the valid domain; shrink the step."""


class ConfigError(QubitBSSError, ValueError):
    """Invalid prior, search or file configuration."""


class EvaluationError(QubitBSSError):
    """Per-sample evaluation failed inside a dataset-level quantity."""

    def __init__(self, index, cause, v=None):
        self.index = int(index)
        self.cause = cause
        self.v = v
        where = "" if v is None else f" at v={v!r}"
        super().__init__(f"sample {self.index} failed{where}: {cause}")


class ScanError(QubitBSSError):
    """Every point of a likelihood scan failed."""


class NoInteriorMaximum(QubitBSSError):
    """The likelihood maximum sits on the edge of the search domain."""

    def __init__(self, message, v_best, logl_best, result=None):
        super().__init__(message)
        self.v_best = v_best
        self.logl_best = logl_best
        self.result = result


class DegenerateData(QubitBSSError):
    """No valid sample survives a perturbation."""


class InfeasibleData(QubitBSSError):
    """No coupling in the search domain makes every sample reachable."""
