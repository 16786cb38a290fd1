"""Exception hierarchy shared across the package."""


class CandleForgeError(Exception):
    """Base class for all errors raised by candleforge."""


class ConfigurationError(CandleForgeError):
    """Bad or missing configuration (env vars, config file, style geometry)."""


class TransportError(CandleForgeError):
    """Network-level failure talking to the exchange; retryable."""


class PayloadError(CandleForgeError):
    """Malformed payload from the exchange or a fixture file."""

    def __init__(self, message: str, offset: int = 0):
        super().__init__(f"{message} (byte offset {offset})")
        self.offset = offset


class ValidationError(CandleForgeError):
    """Data violates a series/frame invariant; never silently fixed."""
