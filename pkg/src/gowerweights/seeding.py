"""Named child RNG streams derived from one master seed.

A stream is identified by the master seed plus a path of names/counters,
so adding a consumer or running iterations in another order never shifts
the randomness seen by the others.
"""

import zlib

import numpy as np


def _key(part) -> int:
    if isinstance(part, (int, np.integer)):
        return int(part)
    return zlib.crc32(str(part).encode("utf-8"))


def child_seed(master: int, *path) -> np.random.SeedSequence:
    return np.random.SeedSequence(entropy=int(master), spawn_key=tuple(_key(p) for p in path))


def child_rng(master: int, *path) -> np.random.Generator:
    return np.random.default_rng(child_seed(master, *path))


def child_int(master: int, *path) -> int:
    """A 63-bit integer seed for APIs that take plain ints."""
    return int(child_seed(master, *path).generate_state(1, dtype=np.uint64)[0] >> np.uint64(1))
