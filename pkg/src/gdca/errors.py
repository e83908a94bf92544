"""Exception hierarchy shared across the package."""


class GDCAError(Exception):
    """Base class for every error raised by this package."""


class ShapeError(GDCAError, ValueError):
    pass


class DomainError(GDCAError, ValueError):
    """A value lies outside an operation's domain (e.g. log of zero)."""

    def __init__(self, message, index=None):
        super().__init__(message)
        self.index = index


class ContractError(GDCAError, RuntimeError):
    """An API precondition was violated (wrong tape, non-scalar loss, ...)."""


class PrecisionError(ContractError):
    pass


class FormatError(GDCAError, ValueError):
    pass


class UnsupportedError(FormatError):
    pass


class LengthError(FormatError):
    """Input ended before the declared payload was complete."""

    def __init__(self, message, offset=None, expected=None, actual=None):
        super().__init__(message)
        self.offset = offset
        self.expected = expected
        self.actual = actual


class VersionError(FormatError):
    pass


class SizeError(GDCAError, ValueError):
    pass


class ConfigError(GDCAError, ValueError):
    def __init__(self, message, line=None, key=None):
        super().__init__(message)
        self.line = line
        self.key = key
