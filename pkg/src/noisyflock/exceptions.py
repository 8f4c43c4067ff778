"""Exception hierarchy shared by every module of the package."""


class FlockError(Exception):
    """Base class for all errors raised by noisyflock."""


class InvalidInputError(FlockError, ValueError):
    """An argument violates a documented precondition."""


class HypothesisError(FlockError):
    """A quantity is undefined because a convergence hypothesis fails."""


class NumericalError(FlockError, ArithmeticError):
    """A computation diverged, produced non-finite values or did not converge."""
