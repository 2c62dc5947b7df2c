"""Injectable clocks.

Every timestamp in the engine flows through a clock object so tests and the
replay command can pin time exactly (idle detection, trace latencies, event
timestamps).
"""

from __future__ import annotations

from datetime import datetime, timedelta, timezone

RFC3339_MS = "%Y-%m-%dT%H:%M:%S"


def format_ts(dt: datetime) -> str:
    """RFC3339 UTC with millisecond precision, e.g. 2025-01-01T00:00:00.000Z."""
    dt = dt.astimezone(timezone.utc)
    return f"{dt.strftime(RFC3339_MS)}.{dt.microsecond // 1000:03d}Z"


def parse_ts(text: str) -> datetime:
    if text.endswith("Z"):
        text = text[:-1] + "+00:00"
    return datetime.fromisoformat(text)


class SystemClock:
    def now(self) -> datetime:
        return datetime.now(timezone.utc)


class ManualClock:
    """Clock that only moves when told to. Used by tests and `replay`."""

    def __init__(self, start: datetime | None = None):
        self._now = start or datetime(2025, 1, 1, tzinfo=timezone.utc)

    def now(self) -> datetime:
        return self._now

    def advance(self, seconds: float) -> None:
        self._now += timedelta(seconds=seconds)
