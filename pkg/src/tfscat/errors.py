"""Exception types shared by the I/O layer and the command line."""


class DataError(ValueError):
    """Input data is malformed or inconsistent."""


class WavFormatError(DataError):
    """A WAV file cannot be parsed.  ``chunk`` names the offending chunk."""

    def __init__(self, message: str, chunk: str | None = None):
        super().__init__(message)
        self.chunk = chunk


class ContainerError(DataError):
    """A coefficient container is malformed."""
