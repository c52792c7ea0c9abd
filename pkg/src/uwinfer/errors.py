"""Exception types shared across the package."""


class UwInferError(Exception):
    """Base class for every error raised by uwinfer."""


class InvalidInputError(UwInferError, ValueError):
    """An argument violates an operation's preconditions."""


class FormatError(UwInferError, ValueError):
    """A serialized artifact (weights file, WAV, profile) is malformed.

    ``field`` names the offending header field or section when known.
    """

    def __init__(self, message: str, field: str | None = None):
        super().__init__(message if field is None else f"{field}: {message}")
        self.field = field


class FootprintError(UwInferError):
    """A model does not fit the device memory budget."""

    def __init__(self, report):
        super().__init__(
            f"model needs {report.total_bytes} bytes but the device limit is "
            f"{report.limit_bytes} bytes (overflow {report.total_bytes - report.limit_bytes})"
        )
        self.report = report


class LinkError(UwInferError):
    """Base class for receiver-side decode failures."""

    kind = "link"


class NoPreambleError(LinkError):
    kind = "no-preamble"


class Fm0ViolationError(LinkError):
    kind = "fm0-violation"

    def __init__(self, message: str, position: int):
        super().__init__(f"{message} at chip {position}")
        self.position = position


class CrcMismatchError(LinkError):
    kind = "crc-mismatch"

    def __init__(self, expected: int, received: int):
        super().__init__(f"CRC mismatch: computed 0x{expected:02X}, received 0x{received:02X}")
        self.expected = expected
        self.received = received
