"""Deterministic RNG derivation shared by every seeded component.

All randomness flows from one root seed; independent streams are derived
from (seed, *tags) so that adding a consumer never perturbs the others.
"""

from __future__ import annotations

import hashlib

import numpy as np


def stream_key(*tags: str | int) -> int:
    """Stable 64-bit key for a tuple of tags (platform independent)."""
    h = hashlib.sha256("/".join(str(t) for t in tags).encode("utf-8")).digest()
    return int.from_bytes(h[:8], "little")


def rng_for(seed: int, *tags: str | int) -> np.random.Generator:
    """Generator for the stream named by tags, rooted at seed."""
    return np.random.default_rng(np.random.SeedSequence([int(seed) & 0xFFFFFFFF, stream_key(*tags)]))
