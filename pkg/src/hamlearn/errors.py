"""Exception types shared across the package."""


class HamLearnError(Exception):
    """Base class for all package errors."""


class InvalidInputError(HamLearnError, ValueError):
    """An argument violates an operation's preconditions."""


class ResourceLimitError(HamLearnError):
    """A request exceeds the dense-simulation cap."""


class NumericalError(HamLearnError, ArithmeticError):
    """A numerical routine failed or drifted beyond tolerance."""


class ConfigError(HamLearnError, ValueError):
    """A scenario configuration failed validation."""
