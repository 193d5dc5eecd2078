class DSNetError(Exception):
    """Base class for all errors raised by this package."""


class ContractViolation(DSNetError, ValueError):
    """An argument broke an operation's precondition (shape, bounds, arity)."""


class ConfigurationError(DSNetError, ValueError):
    """A configuration value is invalid or inconsistent."""


class ConstructionError(DSNetError, ValueError):
    """A model graph could not be wired, e.g. channel accounting mismatch."""


class NonFiniteError(DSNetError, FloatingPointError):
    """A gradient or loss became NaN or infinite."""
