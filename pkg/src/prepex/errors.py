"""Exception hierarchy shared by all prepex modules."""


class PrepexError(Exception):
    """Base class for library errors."""


class InputError(PrepexError, ValueError):
    """Rejected input: wrong shape, out-of-domain value, empty set."""


class ConeError(PrepexError, ValueError):
    """A cone representation violates one of the cone invariants."""


class NumericalError(PrepexError, RuntimeError):
    """An iterative routine failed to converge.

    ``residual`` carries the last optimality residual and ``best`` the best
    iterate seen, when one exists.
    """

    def __init__(self, message, residual=None, best=None):
        super().__init__(message)
        self.residual = residual
        self.best = best


class DegenerateError(PrepexError, ValueError):
    """The problem is degenerate (indistinguishable policies, empty disjunction)."""


class SingularityError(DegenerateError):
    """A closed form divides by a zero preference or allocation component."""
