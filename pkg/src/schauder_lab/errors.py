"""Exception hierarchy shared by all modules."""


class SchauderLabError(Exception):
    """Base class; the CLI maps these to exit code 1."""


class DomainError(SchauderLabError, ValueError):
    pass


class ShapeError(SchauderLabError, ValueError):
    pass


class OrderingError(SchauderLabError, ValueError):
    pass


class ModelError(SchauderLabError):
    pass


class NumericalError(SchauderLabError, ArithmeticError):
    pass


class UnsupportedError(SchauderLabError, NotImplementedError):
    pass


class ConfigError(SchauderLabError, ValueError):
    """Invalid configuration. ``field`` holds a dotted path such as ``"gamma"``."""

    def __init__(self, message, field=None):
        self.field = field
        prefix = f"{field}: " if field else ""
        super().__init__(prefix + message)


class NonConvergenceError(SchauderLabError):
    def __init__(self, message, history=(), segment=None):
        self.history = list(history)
        self.segment = segment
        super().__init__(message)
