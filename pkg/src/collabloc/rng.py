"""Seeded randomness streams.

Every consumer derives its own generator from the run seed plus a stable
key, so evaluation order between providers never changes results.
"""

import zlib

import numpy as np


def stable_key(value) -> int:
    if isinstance(value, (int, np.integer)):
        return int(value) & 0xFFFFFFFF
    return zlib.crc32(str(value).encode("utf-8"))


def stream(seed: int, *keys) -> np.random.Generator:
    return np.random.default_rng([int(seed) & 0xFFFFFFFFFFFFFFFF, *(stable_key(k) for k in keys)])
