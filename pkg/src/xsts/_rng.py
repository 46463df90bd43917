"""Counter-based random streams.

Every stream is a Philox generator keyed by a SeedSequence built from
``(seed, *counters)``.  Stream ``k`` of a given seed is therefore the same
regardless of which worker draws it or in which order, which is what makes
replications and limit-law draws independent of scheduling.
"""
from __future__ import annotations

import numpy as np

__all__ = ["stream", "as_generator"]


def stream(seed: int, *counters: int) -> np.random.Generator:
    """Return the generator for ``(seed, counters...)``.

    Parameters
    ----------
    seed : int
        Master seed, any non-negative integer below 2**64.
    *counters : int
        Stream coordinates, for example the replication index or the chunk
        index of a limit-law sampler.
    """
    entropy = [int(seed)] + [int(c) for c in counters]
    if any(e < 0 for e in entropy):
        raise ValueError("seed and counters must be non-negative")
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(entropy)))


def as_generator(seed) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return stream(seed)
