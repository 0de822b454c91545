"""Exception hierarchy shared across the package."""

from __future__ import annotations


class SdfuzzError(Exception):
    """Base class for all errors raised by sdfuzz."""


class ValidationError(SdfuzzError, ValueError):
    """A value violates a documented invariant (empty payload, oversize input...)."""


class ContractError(SdfuzzError, ValueError):
    """A caller broke an operation precondition."""


class StoreError(SdfuzzError, OSError):
    """Recoverable I/O failure while reading or writing the campaign tree."""

    def __init__(self, message: str, path: object) -> None:
        super().__init__(f"{message}: {path}")
        self.path = path


class BacktraceParseError(SdfuzzError, ValueError):
    """Debugger backtrace text could not be turned into a crash artifact."""


class GeneratorEmpty(SdfuzzError):
    """The generator produced no usable candidates."""

    def __init__(self, message: str, transcript: str | None = None) -> None:
        super().__init__(message)
        self.transcript = transcript


class GeneratorConfigError(SdfuzzError):
    """Endpoint configuration is unusable (missing token, rejected credentials...)."""


class ConfigError(SdfuzzError, ValueError):
    """Campaign configuration is invalid."""
