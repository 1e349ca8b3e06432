"""Exception types raised by the toolkit."""


class SoundscapeKitError(Exception):
    """Base class for all toolkit errors."""


class AudioDecodeError(SoundscapeKitError):
    """A file could not be decoded as linear-PCM WAV."""


class SchemaError(SoundscapeKitError):
    """A CSV or config file violates its documented schema.

    Carries the offending path and (1-based) line number when known.
    """

    def __init__(self, message, path=None, line=None):
        self.path = path
        self.line = line
        prefix = ""
        if path is not None:
            prefix = f"{path}:"
            if line is not None:
                prefix += f"{line}:"
            prefix += " "
        super().__init__(prefix + message)


class ConfigError(SoundscapeKitError):
    """A run configuration failed validation."""
