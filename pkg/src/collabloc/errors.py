"""Exception types shared across the package."""


class CollabLocError(Exception):
    """Base class for all package errors."""


class InvalidArgument(CollabLocError, ValueError):
    """An argument violates an operation's precondition."""


class NoInformation(CollabLocError):
    """No usable evidence exists (all providers answered NA, or zero weight)."""


class RoutingError(CollabLocError):
    """A request could not be delivered through the overlay."""


class UnsealError(CollabLocError):
    """An onion layer could not be opened: wrong key or tampered bytes."""


class GenerationError(CollabLocError):
    """A synthetic world could not be generated from its configuration."""
