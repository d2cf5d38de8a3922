"""Counter-based random streams.

Every Monte-Carlo consumer asks for a stream by a tuple of labels, e.g.
``stream(seed, "field", t, replica)``.  The labels are hashed together with
the global seed into a 128-bit Philox key, so a replica's draws depend only
on ``(seed, labels)`` and never on scheduling or worker count.
"""

from __future__ import annotations

import hashlib

import numpy as np


def stream_key(seed: int, *labels) -> int:
    h = hashlib.blake2b(digest_size=16)
    h.update(repr(int(seed)).encode())
    for lab in labels:
        h.update(b"\x1f")
        h.update(repr(lab).encode())
    return int.from_bytes(h.digest(), "little")


def stream(seed: int, *labels) -> np.random.Generator:
    """Independent generator keyed by ``seed`` and ``labels``."""
    return np.random.Generator(np.random.Philox(key=stream_key(seed, *labels)))
