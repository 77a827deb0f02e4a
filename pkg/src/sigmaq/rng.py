"""Per-sample random streams.

Sample ``i`` of a run with master seed ``s`` draws from the stream keyed by
``(s, stream, i)``. The key goes through :class:`numpy.random.SeedSequence`,
which hashes it into an independent PCG64 state, so the numbers a sample sees
do not depend on which worker generates it or in what order.
"""

from __future__ import annotations

from typing import Union

import numpy as np

SeedLike = Union[int, tuple]

# stream ids: the two sides of a cross-measure comparison must not share draws
STREAM_P = 0
STREAM_Q = 1
STREAM_PILOT = 2
STREAM_EXTEND = 3
STREAM_Q2 = 4


def seed_sequence(seed: SeedLike) -> np.random.SeedSequence:
    if isinstance(seed, (tuple, list)):
        if not seed:
            raise ValueError("empty seed tuple")
        master, *keys = (int(k) for k in seed)
        return np.random.SeedSequence(master, spawn_key=tuple(keys))
    return np.random.SeedSequence(int(seed))


def derive_rng(seed: SeedLike) -> np.random.Generator:
    """Generator for an int seed or a ``(master, *keys)`` tuple."""
    return np.random.Generator(np.random.PCG64(seed_sequence(seed)))


def sample_rng(master: int, index: int, stream: int = STREAM_P) -> np.random.Generator:
    return derive_rng((master, stream, index))


def seed_id(seed: SeedLike) -> int:
    """Stable nonnegative integer identifying a seed (for provenance)."""
    return int(seed_sequence(seed).generate_state(1, dtype=np.uint64)[0] >> np.uint64(1))
