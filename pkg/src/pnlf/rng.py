"""Seeded random streams.

Every random draw in the package goes through :func:`stream`, which builds a
``numpy.random.Generator`` over PCG64 from a ``SeedSequence`` whose entropy is
``[seed mod 2**64, *tags]``. PCG64 and SeedSequence are specified
bit-for-bit by numpy, so results reproduce across platforms.
"""
from __future__ import annotations

import numpy as np

# stream tags; the values are part of the reproducibility contract
INIT = 0
SHUFFLE = 1
SPLIT = 2
SYNTH = 3

_MASK64 = (1 << 64) - 1


def stream(seed: int, *tags: int) -> np.random.Generator:
    entropy = [int(seed) & _MASK64, *(int(t) for t in tags)]
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(entropy)))


def epoch_order(seed: int, epoch: int, n: int) -> np.ndarray:
    """Visiting order of the ``n`` training instances in ``epoch`` (0-based)."""
    return stream(seed, SHUFFLE, epoch).permutation(n)
