"""Counter-based random streams keyed by (seed, toy, stream)."""

from __future__ import annotations

import numpy as np

STREAM_BASE, STREAM_SUCCESS, STREAM_ENHANCED = 0, 1, 2


def stream(seed: int, *key: int) -> np.random.Generator:
    """A Philox generator whose output depends only on ``seed`` and ``key``.

    Streams for different keys are statistically independent, so toys can be
    generated in any order or in parallel with identical results.
    """
    if seed < 0 or any(k < 0 for k in key):
        raise ValueError("seed and key entries must be non-negative")
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(seed, spawn_key=key)))
