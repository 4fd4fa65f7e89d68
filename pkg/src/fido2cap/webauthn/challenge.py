"""Challenge issue/consume store with atomic single-use semantics.

A challenge may carry ceremony bindings: the username it was issued for,
the gateway hid of the captive client, and the WebAuthn user handle. The
consume step is the commit point of verification: under two racing
verifies of the same response, exactly one consume succeeds.
"""

from __future__ import annotations

import enum
import threading
from dataclasses import dataclass, field

from ..entropy import RandomSource, system_random
from .errors import ChallengeUnknownOrExpired

CHALLENGE_LENGTH = 32


class Ceremony(str, enum.Enum):
    REGISTRATION = "registration"
    AUTHENTICATION = "authentication"


@dataclass
class Challenge:
    value: bytes
    ceremony: Ceremony
    issued_at: float
    expires_at: float
    bound_username: str | None = None
    bound_hid: str | None = None
    bound_user_id: bytes | None = None
    consumed: bool = field(default=False)


class ChallengeStore:
    """In-memory challenge table; all mutation happens under one lock."""

    def __init__(self, clock, rand: RandomSource = system_random):
        self._clock = clock
        self._rand = rand
        self._lock = threading.Lock()
        self._items: dict[bytes, Challenge] = {}

    def issue(
        self,
        ceremony: Ceremony,
        ttl: float,
        *,
        bound_username: str | None = None,
        bound_hid: str | None = None,
        bound_user_id: bytes | None = None,
    ) -> Challenge:
        if ttl <= 0:
            raise ValueError("challenge ttl must be positive")
        now = self._clock.now()
        challenge = Challenge(
            value=self._rand(CHALLENGE_LENGTH),
            ceremony=ceremony,
            issued_at=now,
            expires_at=now + ttl,
            bound_username=bound_username,
            bound_hid=bound_hid,
            bound_user_id=bound_user_id,
        )
        with self._lock:
            self._prune_locked(now)
            self._items[challenge.value] = challenge
        return challenge

    def _lookup_locked(self, value: bytes, ceremony: Ceremony) -> Challenge:
        challenge = self._items.get(value)
        now = self._clock.now()
        if (
            challenge is None
            or challenge.consumed
            or challenge.ceremony != ceremony
            or now > challenge.expires_at
        ):
            raise ChallengeUnknownOrExpired("challenge unknown, expired, or used")
        return challenge

    def peek(self, value: bytes, ceremony: Ceremony) -> Challenge:
        """Look up a live challenge without consuming it."""
        with self._lock:
            return self._lookup_locked(value, ceremony)

    def consume(self, value: bytes, ceremony: Ceremony) -> Challenge:
        """Atomically mark a live challenge as consumed and return it."""
        with self._lock:
            challenge = self._lookup_locked(value, ceremony)
            challenge.consumed = True
            return challenge

    def _prune_locked(self, now: float) -> None:
        dead = [v for v, c in self._items.items() if c.consumed or now > c.expires_at]
        for value in dead:
            del self._items[value]

    def __len__(self) -> int:
        with self._lock:
            return len(self._items)
