"""Platform-stable keyed hashing used for seeded tie-breaks and the random scorer."""
import hashlib

import numpy as np

_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_GOLDEN = np.uint64(0x9E3779B97F4A7C15)


def stable_hash64(text: str) -> int:
    return int.from_bytes(hashlib.blake2b(text.encode("utf-8"), digest_size=8).digest(), "little")


def mix64(x):
    """splitmix64 finalizer, elementwise over uint64 arrays."""
    x = np.asarray(x, dtype=np.uint64)
    with np.errstate(over="ignore"):
        x = x + _GOLDEN
        x = (x ^ (x >> np.uint64(30))) * _M1
        x = (x ^ (x >> np.uint64(27))) * _M2
        return x ^ (x >> np.uint64(31))


def combine(*parts):
    """Order-sensitive hash of several uint64 arrays/scalars (broadcast)."""
    h = np.uint64(0)
    with np.errstate(over="ignore"):
        for p in parts:
            h = mix64(np.asarray(h, dtype=np.uint64) ^ np.asarray(p, dtype=np.uint64))
    return h


def to_unit(h):
    """Map uint64 hashes to floats in [0, 1)."""
    return (np.asarray(h, dtype=np.uint64) >> np.uint64(11)).astype(np.float64) * (2.0 ** -53)


def hash_ids(ids):
    return np.fromiter((stable_hash64(i) for i in ids), dtype=np.uint64, count=len(ids))


def seed_word(seed) -> np.uint64:
    return np.uint64(int(seed) & 0xFFFFFFFFFFFFFFFF)
