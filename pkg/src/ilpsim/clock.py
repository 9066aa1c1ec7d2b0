"""Deterministic simulated clock shared by ledgers, connectors and transports."""

from __future__ import annotations

import threading
from datetime import datetime, timedelta, timezone

DEFAULT_EPOCH = datetime(2019, 6, 19, 9, 42, 0, tzinfo=timezone.utc)


class SimClock:
    """Manually advanced clock. All expiry and settle-delay logic reads this,
    never wall time, so timing behaviour is reproducible."""

    def __init__(self, start: datetime = DEFAULT_EPOCH):
        if start.tzinfo is None:
            raise ValueError("clock epoch must be timezone-aware")
        self._now = start
        self._lock = threading.Lock()

    def now(self) -> datetime:
        with self._lock:
            return self._now

    def advance(self, seconds: float) -> datetime:
        if seconds < 0:
            raise ValueError("clock only moves forward")
        with self._lock:
            self._now += timedelta(seconds=seconds)
            return self._now
