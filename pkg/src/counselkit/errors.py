"""Exception types shared across the engine."""

from __future__ import annotations


class CounselkitError(Exception):
    """Base class for all engine errors."""


class ConfigurationError(CounselkitError):
    """Invalid configuration, or a provider asked for a completion it cannot produce."""


class ProviderError(CounselkitError):
    """Transport-level provider failure, raised after retries are exhausted."""

    def __init__(self, message: str, attempts: int = 1):
        super().__init__(message)
        self.attempts = attempts


class ParseError(CounselkitError):
    """A structured completion could not be parsed into the expected record."""


class PlanError(CounselkitError):
    """Plan generation produced unusable output even after a retry."""


class IntegrityError(CounselkitError):
    """Append-only sequence violation (gap or duplicate) in an event log."""


class CorruptLogError(CounselkitError):
    """An event log line failed to decode; carries the offending line number."""

    def __init__(self, path: str, line_no: int, reason: str):
        super().__init__(f"{path}:{line_no}: {reason}")
        self.path = str(path)
        self.line_no = line_no
        self.reason = reason


class NotFoundError(CounselkitError):
    """The referenced client, session, or document does not exist."""


class ConflictError(CounselkitError):
    """The operation conflicts with existing state (e.g. an already-open session)."""
