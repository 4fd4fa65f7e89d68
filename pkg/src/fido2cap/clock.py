"""Time sources for the protocol stack.

Every component that deals with TTLs (challenges, sessions, poll cycles)
takes a clock object instead of calling time.time() directly, so the whole
stack can run against a virtual clock in tests and scenario scripts.
"""

from __future__ import annotations

import threading
import time


class SystemClock:
    """Wall-clock time; used by `serve` mode."""

    def now(self) -> float:
        return time.time()

    def sleep(self, seconds: float) -> None:
        time.sleep(seconds)


class VirtualClock:
    """Manually advanced clock; sleep() advances instead of blocking.

    Thread-safe: the poll loop and the expiry sweep may share one instance.
    """

    def __init__(self, start: float = 0.0):
        self._now = float(start)
        self._lock = threading.Lock()

    def now(self) -> float:
        with self._lock:
            return self._now

    def advance(self, seconds: float) -> float:
        if seconds < 0:
            raise ValueError("cannot advance a clock backwards")
        with self._lock:
            self._now += seconds
            return self._now

    def sleep(self, seconds: float) -> None:
        self.advance(seconds)
