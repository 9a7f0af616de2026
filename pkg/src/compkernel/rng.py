"""Seeded random streams.

Every stochastic routine takes an integer seed and derives its randomness
from Philox, a counter-based bit generator. Monte-Carlo loops are split
into fixed-size chunks and chunk ``c`` always reads from the substream
``SeedSequence(seed, spawn_key=(c,))``. Because the chunk layout depends only
on the sample count, results are identical however the chunks are scheduled.
"""

from __future__ import annotations

from typing import Iterator

import numpy as np

DEFAULT_SEED = 42
CHUNK_SIZE = 1 << 16


def generator(seed: int, *key: int) -> np.random.Generator:
    """Return a Philox generator for the substream ``key`` of ``seed``."""
    if seed < 0:
        raise ValueError(f"seed must be non-negative, got {seed}")
    ss = np.random.SeedSequence(int(seed), spawn_key=tuple(int(k) for k in key))
    return np.random.Generator(np.random.Philox(ss))


def chunks(total: int, chunk_size: int = CHUNK_SIZE) -> Iterator[tuple[int, int]]:
    """Yield ``(chunk_index, size)`` pairs covering ``total`` draws."""
    if total < 0:
        raise ValueError("total must be non-negative")
    index = 0
    start = 0
    while start < total:
        size = min(chunk_size, total - start)
        yield index, size
        index += 1
        start += size
