"""Hierarchical seed derivation.

Every random stream in the package is addressed by a path of non-negative
integers below a master seed, e.g. ``(master, cell, run, point)``.  Streams
built from distinct paths are statistically independent and do not depend on
the order in which work is scheduled.
"""

from __future__ import annotations

from typing import Sequence, Union

import numpy as np

SeedLike = Union[int, Sequence[int], np.random.SeedSequence]

# stream labels used as the first spawn-key component under a run seed
STREAM_OBJECTIVE = 1
STREAM_DIRECTIONS = 2
STREAM_EXPLORE = 3
STREAM_REFERENCE = 4
STREAM_LANDSCAPE = 5


def seed_sequence(seed: SeedLike, *keys: int) -> np.random.SeedSequence:
    """Return the SeedSequence at ``seed`` extended by ``keys``.

    ``seed`` may be an int, a sequence ``(entropy, k1, k2, ...)`` or an
    existing SeedSequence.
    """
    if isinstance(seed, np.random.SeedSequence):
        entropy, base = seed.entropy, tuple(seed.spawn_key)
    elif isinstance(seed, (tuple, list)):
        if not seed:
            raise ValueError("empty seed path")
        entropy, base = int(seed[0]), tuple(int(k) for k in seed[1:])
    else:
        entropy, base = int(seed), ()
    path = base + tuple(int(k) for k in keys)
    if entropy < 0 or any(k < 0 for k in path):
        raise ValueError("seed components must be non-negative")
    return np.random.SeedSequence(entropy, spawn_key=path)


def make_rng(seed: SeedLike, *keys: int) -> np.random.Generator:
    return np.random.default_rng(seed_sequence(seed, *keys))


def derive_seed(seed: SeedLike, *keys: int) -> int:
    """Collapse a seed path into a single 63-bit integer seed."""
    state = seed_sequence(seed, *keys).generate_state(2, dtype=np.uint32)
    return int((int(state[0]) << 31) ^ int(state[1]))


def extend_seed(seed: SeedLike, *keys: int) -> tuple:
    """The seed path ``seed`` followed by ``keys``, as a plain tuple."""
    if isinstance(seed, np.random.SeedSequence):
        return (int(seed.entropy), *seed.spawn_key, *map(int, keys))
    if isinstance(seed, (tuple, list)):
        return (*map(int, seed), *map(int, keys))
    return (int(seed), *map(int, keys))
