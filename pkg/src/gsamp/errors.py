"""Exception hierarchy shared by every module of the package."""


class GsampError(Exception):
    """Base class for all package errors."""


class ValidationError(GsampError, ValueError):
    """Input violates a documented precondition."""


class NumericalError(GsampError, ArithmeticError):
    """A computation produced non-finite values or failed to converge."""


class ConfigError(GsampError):
    """Malformed configuration; carries line-numbered diagnostics."""

    def __init__(self, messages):
        if isinstance(messages, str):
            messages = [messages]
        self.messages = list(messages)
        super().__init__("; ".join(self.messages))


class DatasetError(GsampError):
    """Dataset files could not be parsed into a consistent Dataset."""
