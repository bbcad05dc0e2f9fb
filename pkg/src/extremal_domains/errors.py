"""Exception types shared across the solver stack."""

from __future__ import annotations


class GeodesicIntegrationError(RuntimeError):
    """Geodesic integration failed (chart exit or step underflow).

    Carries the last valid chart point reached.
    """

    def __init__(self, message: str, last_point=None):
        super().__init__(message)
        self.last_point = last_point


class MetricDegeneracyError(RuntimeError):
    """A metric lost positive definiteness (e.g. past a conjugate point)."""


class OutOfRangeError(ValueError):
    """A boundary shape maps outside the available metric grid."""


class NoConvergenceError(RuntimeError):
    """An iterative solve failed to converge; carries the residual history."""

    def __init__(self, message: str, residual_history=None):
        super().__init__(message)
        self.residual_history = list(residual_history or [])


class PositivityViolationError(RuntimeError):
    """A converged field is not positive, i.e. outside the perturbative regime."""


class ModeDegenerateError(RuntimeError):
    """A mode ODE solve is near-singular (kernel value below threshold)."""


class PreconditionError(ValueError):
    """A documented operation precondition does not hold."""


class CenterUndefinedError(RuntimeError):
    """The center-of-mass minimization did not converge."""


class TruncationError(ValueError):
    """Fourier data carries nonzero content beyond the resolved mode range."""


class ConsistencyError(ValueError):
    """User-supplied callables disagree with each other beyond tolerance."""

    def __init__(self, message: str, max_deviation=None, location=None):
        super().__init__(message)
        self.max_deviation = max_deviation
        self.location = location
