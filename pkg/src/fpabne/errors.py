"""Exception hierarchy shared by all modules."""


class FpaError(Exception):
    """Base class for errors raised by this package."""


class DomainError(FpaError, ValueError):
    """An argument lies outside the domain of an operation."""


class StructureError(FpaError, ValueError):
    """Malformed input data (shape, ordering, arity)."""


class ValidationError(FpaError, ValueError):
    """Input is well-formed but violates a semantic invariant."""

    def __init__(self, message: str, violations=()):
        super().__init__(message)
        self.violations = tuple(violations)


class PreconditionError(ValidationError):
    """An operation was called on arguments that break its precondition."""


class ResourceError(FpaError, RuntimeError):
    """A configured size or iteration budget would be exceeded."""

    def __init__(self, message: str, count=None):
        super().__init__(message)
        self.count = count


class ReductionFailure(FpaError, AssertionError):
    """A decoded equilibrium contradicts a claim of the circuit reduction."""

    def __init__(self, message: str, bidder=None):
        super().__init__(message)
        self.bidder = bidder
