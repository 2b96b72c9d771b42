"""Exception types shared across the toolkit."""


class ContactLabError(Exception):
    """Base class for all toolkit errors."""


class EvaluationError(ContactLabError):
    """A Hamiltonian, vector field, or map produced a non-finite value."""


class BlowupError(ContactLabError):
    """A closed-form subflow left its domain (finite-time blow-up).

    Carries the critical duration at which the flow ceases to exist from
    the given state, when it is known analytically.
    """

    def __init__(self, message, critical_time=None):
        super().__init__(message)
        self.critical_time = critical_time


class ProlongationSingularityError(BlowupError):
    """The momentum-prolongation linear system is numerically singular.

    A blow-up subtype: trajectory runners record the event time and stop
    instead of propagating.
    """


class OrientationError(ContactLabError):
    """A map reversed the coorientation (pullback has non-positive scale)."""


class DegreeLimitError(ContactLabError):
    """Monomial re-expansion of an interpolant was requested past the
    conditioning limit."""


class ConfigError(ContactLabError):
    """Invalid experiment configuration."""


class DegenerateFitError(ContactLabError):
    """A convergence fit had no rows above the roundoff floor."""


class StiffnessError(ContactLabError):
    """An adaptive integrator underflowed its minimum step size."""
