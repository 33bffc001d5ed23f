"""Exception hierarchy shared by the library and the command-line front end."""


class BridgeError(Exception):
    """Base class for numerical failures raised by this package."""


class DomainError(ValueError):
    """An argument lies outside the domain of the operation (e.g. ``epsilon <= 0``)."""


class IntegrationError(BridgeError):
    """Non-finite values appeared while integrating the state-transition ODE."""


class UncontrollableError(BridgeError):
    """The controllability Gramian is not symmetric positive definite.

    The pair ``(A(t), B(t))`` must be controllable on the interval for the
    Gaussian transition kernel and the contraction bound to exist.
    """


class SingularIntervalError(BridgeError):
    """A sub-interval Gramian is degenerate; evaluate at an interior time instead."""


class GJKConvergenceError(BridgeError):
    """GJK hit its iteration cap before meeting the duality-gap tolerance."""

    def __init__(self, message, best_bound=None):
        super().__init__(message)
        self.best_bound = best_bound


class SupportError(BridgeError):
    """Sampling a support set failed (acceptance rate too small)."""


class EvaluationError(BridgeError):
    """The Schrodinger factor underflowed at a query point outside the support."""
