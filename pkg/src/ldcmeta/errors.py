"""Exception types shared across the package."""


class LdcError(Exception):
    """Base class for all package errors."""


class InputError(LdcError, ValueError):
    """An argument value violates an operation's precondition."""


class DimensionError(InputError):
    """Array shapes or dimensions do not agree."""


class NumericError(LdcError, ArithmeticError):
    """A computation produced a non-finite value."""


class FormatError(LdcError, ValueError):
    """A byte stream or file does not match its declared format."""


class DataError(LdcError, ValueError):
    """A dataset cannot support the requested operation."""


class ProtocolError(LdcError, ValueError):
    """An episode violates the evaluation protocol (e.g. support/query overlap)."""


class ConfigError(LdcError, ValueError):
    """A configuration document is invalid.

    ``field`` names the offending entry as a dotted path.
    """

    def __init__(self, message: str, field: str = ""):
        super().__init__(message)
        self.field = field
