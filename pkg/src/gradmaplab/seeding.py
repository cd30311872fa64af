"""Deterministic RNG derivation.

All samplers take an explicit 64-bit seed.  Per-sample generators are
derived as ``rng_for(seed, index, ...)`` so batch results never depend on
execution order or parallelism degree.
"""

import numpy as np


def rng_for(seed: int, *stream: int) -> np.random.Generator:
    """Generator for a (seed, counter...) stream, independent per stream."""
    return np.random.default_rng(np.random.SeedSequence([int(seed) & 0xFFFFFFFFFFFFFFFF, *map(int, stream)]))
