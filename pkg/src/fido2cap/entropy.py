"""Injectable randomness.

Components never call os.urandom directly; they take a `rand(n) -> bytes`
callable so scenario runs are reproducible under a fixed seed (credential
ids, challenges, IVs, hids, session tokens all derive from one source).
"""

from __future__ import annotations

import os
import random
from typing import Callable

RandomSource = Callable[[int], bytes]

system_random: RandomSource = os.urandom


def seeded_random(seed: int) -> RandomSource:
    """Deterministic byte source for reproducible scenario transcripts."""
    rng = random.Random(seed)
    return rng.randbytes
