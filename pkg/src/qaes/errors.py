"""Exception types shared across the package."""


class QaesError(Exception):
    """Base class for all package errors."""


class UnsupportedKeyLength(QaesError, ValueError):
    pass


class KeyLengthMismatch(QaesError, ValueError):
    pass


class KeyDepletionError(QaesError):
    """The quantum key stream cannot serve the requested bits.

    Callers should run a fresh BB84 session and retry with a new stream.
    """

    def __init__(self, requested, available):
        self.requested = requested
        self.available = available
        super().__init__(
            f"key stream depleted: requested {requested} bits, "
            f"{available} available; run a new BB84 session"
        )


class DegenerateRowError(QaesError, ValueError):
    """A row has max == min, so its spread is zero."""


class ContainerError(QaesError, ValueError):
    pass


class TruncatedContainer(ContainerError):
    pass


class ProtocolError(QaesError):
    pass
