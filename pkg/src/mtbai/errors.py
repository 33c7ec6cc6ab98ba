"""Exception hierarchy shared by the library and the CLI."""


class MtbaiError(Exception):
    """Base class for all package errors."""


class UsageError(MtbaiError, ValueError):
    """An argument is outside its documented domain."""


class StructureError(MtbaiError):
    """The model has no unique shared optimal representation."""


class DegenerateWeightError(MtbaiError, ValueError):
    """A weighted mean was requested over a set carrying zero weight."""


class NumericalError(MtbaiError, ArithmeticError):
    """A solver produced a non-finite value."""

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}


class ConfigError(MtbaiError, ValueError):
    """An experiment configuration or instance file is invalid."""
