"""Seeded random streams.

All randomness goes through Philox (a counter-based bit generator) keyed by
a :class:`numpy.random.SeedSequence` built from the caller's seed plus a
stream label, so independent consumers never share a stream and results do
not depend on call order or worker scheduling.
"""

import zlib

import numpy as np


def _key(part) -> int:
    if isinstance(part, str):
        return zlib.crc32(part.encode())
    return int(part)


def make_rng(seed, *stream) -> np.random.Generator:
    """Generator for ``seed`` (an int, str or tuple of them) and a stream label."""
    if isinstance(seed, np.random.Generator):
        return seed
    entropy = [_key(p) for p in seed] if isinstance(seed, (tuple, list)) else _key(seed)
    ss = np.random.SeedSequence(entropy=entropy, spawn_key=tuple(_key(s) for s in stream))
    return np.random.Generator(np.random.Philox(ss))
