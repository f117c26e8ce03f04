"""Exception types shared across the codec."""


class CodecError(Exception):
    """Base class for every error raised by this package."""


class ConfigError(CodecError, ValueError):
    pass


class FormatError(CodecError, ValueError):
    """Input is not a recognised file or container format."""


class DecodeError(CodecError, ValueError):
    """A compressed payload could not be decoded.

    ``offset`` is the byte offset within the payload where the problem was
    detected (``None`` when it cannot be localised).
    """

    def __init__(self, message, offset=None):
        if offset is not None:
            message = f"{message} (at byte {offset})"
        super().__init__(message)
        self.offset = offset
