"""Seeded random substreams.

Every random draw in the package goes through :func:`substream`, which keys a
:class:`numpy.random.SeedSequence` by ``(seed, *keys)``.  Two draws that use the
same keys see the same numbers no matter which order (or which worker) runs
them, which is what makes sweeps and Monte-Carlo runs schedule-independent.
"""

import hashlib

import numpy as np

_U64 = (1 << 64) - 1


def _key(k) -> int:
    if isinstance(k, (int, np.integer)) and k >= 0:
        return int(k) & 0xFFFFFFFF
    # floats and strings (sweep axis values, labels) hash to a stable u32
    digest = hashlib.blake2b(repr(k).encode(), digest_size=4).digest()
    return int.from_bytes(digest, "little")


def seed_sequence(seed: int, *keys) -> np.random.SeedSequence:
    return np.random.SeedSequence(int(seed) & _U64, spawn_key=tuple(_key(k) for k in keys))


def substream(seed: int, *keys) -> np.random.Generator:
    """Independent PCG64 generator for the substream ``(seed, *keys)``."""
    return np.random.Generator(np.random.PCG64(seed_sequence(seed, *keys)))


def derive_seed(seed: int, *keys) -> int:
    """Derive a u64 child seed, e.g. one per (axis value, trial index)."""
    lo, hi = seed_sequence(seed, *keys).generate_state(2, dtype=np.uint32)
    return (int(hi) << 32) | int(lo)
