"""Counter-based random streams.

Draws are produced in fixed-size chunks of trials.  Chunk ``k`` of stream
``s`` under master seed ``seed`` always comes from the Philox generator
keyed by (seed, s) with its counter started at k << 64, so any worker can
regenerate any chunk independently and a run with more trials extends the
trial set of a shorter run.
"""
from __future__ import annotations

import numpy as np

__all__ = ["SOURCE_STREAM", "NOISE_STREAM", "chunk_generator", "normal_chunk", "MASK64"]

MASK64 = (1 << 64) - 1
SOURCE_STREAM = 1
NOISE_STREAM = 2


def chunk_generator(seed: int, stream: int, chunk: int) -> np.random.Generator:
    if chunk < 0:
        raise ValueError("chunk index must be non-negative")
    key = np.array([seed & MASK64, stream & MASK64], dtype=np.uint64)
    counter = np.array([0, 0, chunk & MASK64, 0], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key, counter=counter))


def normal_chunk(seed: int, stream: int, chunk: int, chunk_size: int, dim: int) -> np.ndarray:
    """Standard normal block of shape (chunk_size, dim) for one chunk."""
    return chunk_generator(seed, stream, chunk).standard_normal((chunk_size, dim))
