"""Order-independent seed derivation.

Every random draw in an estimator is keyed by a path such as
``(master, replicate, step)`` so that results do not depend on the order in
which work units run.
"""
import zlib

import numpy as np

_MASK = (1 << 64) - 1


def _key(part) -> int:
    if isinstance(part, str):
        return zlib.crc32(part.encode())
    if isinstance(part, float):
        return zlib.crc32(repr(part).encode())
    return int(part) & _MASK


def child_seed(master: int, *path) -> int:
    """A 64-bit seed determined by ``master`` and the key path."""
    ss = np.random.SeedSequence(entropy=int(master) & _MASK, spawn_key=tuple(_key(p) for p in path))
    return int(ss.generate_state(1, dtype=np.uint64)[0])


def child_rng(master: int, *path) -> np.random.Generator:
    return np.random.default_rng(child_seed(master, *path))
