"""Exception hierarchy shared by every layer of the package."""


class SdupError(Exception):
    """Base class for all package errors."""


class ParameterError(SdupError, ValueError):
    """An argument is outside its documented domain."""


class InsufficientSharesError(SdupError):
    """Fewer shares are available than the reconstruction threshold."""


class DuplicateShareError(SdupError, ValueError):
    pass


class MalformedShareError(SdupError, ValueError):
    pass


class FrameFormatError(SdupError, ValueError):
    """Wire bytes or container bytes do not parse."""


class SessionMismatchError(SdupError):
    pass


class ConfigurationError(SdupError):
    """Bad scenario/topology input. ``line`` is 1-based when known."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class RoutingError(SdupError):
    pass


class UnreachableError(RoutingError):
    pass


class ModelLimitError(SdupError):
    """An exhaustive model was asked to run beyond its configured bound."""


class EnumerationLimitError(ModelLimitError):
    pass
