"""Counter-based random streams: (seed, stream) -> independent reproducible generator.

Streams are keyed Philox generators, so draws are reproducible and independent
of the order in which streams are consumed.  Parallel work splits along the
stream dimension and reduces deterministically.
"""

from __future__ import annotations

import hashlib

import numpy as np

_MASK64 = (1 << 64) - 1


def stream_id(label) -> int:
    """Map an integer or string label to a stable 64-bit stream id."""
    if isinstance(label, (int, np.integer)):
        return int(label) & _MASK64
    digest = hashlib.blake2b(str(label).encode(), digest_size=8).digest()
    return int.from_bytes(digest, "little")


def stream(seed: int, label=0) -> np.random.Generator:
    """Generator for the given (seed, stream label) pair."""
    key = np.array([int(seed) & _MASK64, stream_id(label)], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))
