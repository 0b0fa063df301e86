"""Exception types raised by parafac."""


class ParafacError(Exception):
    """Base class for all library errors."""


class InvalidInputError(ParafacError, ValueError):
    """Arguments violate a documented precondition."""


class SingularityError(ParafacError, ArithmeticError):
    """A matrix that must be inverted is numerically singular."""


class NonConvergenceError(ParafacError, ArithmeticError):
    """An iterative procedure diverged."""


class PoleError(ParafacError, ZeroDivisionError):
    """Evaluation requested at a pole of a transfer matrix."""


class ResourceError(ParafacError, MemoryError):
    """A dense materialization would exceed the configured size guard."""
