"""
Deterministic seed derivation for replication-parallel Monte Carlo.

Replication ``i`` of a run seeded with ``s`` draws from
``numpy.random.Generator(PCG64(derive_seed(s, i)))`` where::

    GOLDEN = 0x9E3779B97F4A7C15
    derive_seed(s, i) = splitmix64((s + (i + 1) * GOLDEN) mod 2**64)

    splitmix64(z):
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9 mod 2**64
        z = (z ^ (z >> 27)) * 0x94D049BB133111EB mod 2**64
        return z ^ (z >> 31)

This is the i-th output of the SplitMix64 sequence started at ``s``, so
streams depend only on ``(seed, index)`` and never on thread scheduling.
"""

import numpy as np

MASK64 = (1 << 64) - 1
GOLDEN = 0x9E3779B97F4A7C15


def splitmix64(z: int) -> int:
    z &= MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return z ^ (z >> 31)


def derive_seed(seed: int, index: int) -> int:
    """
    Returns the 64-bit seed of replication ``index``.
    """
    if index < 0:
        raise ValueError("Replication index must be nonnegative")
    return splitmix64((seed + (index + 1) * GOLDEN) & MASK64)


def make_rng(seed: int, index: int | None = None) -> np.random.Generator:
    """
    Builds a PCG64 generator for a run seed, or for one of its replications.
    """
    derived = seed & MASK64 if index is None else derive_seed(seed, index)
    return np.random.Generator(np.random.PCG64(derived))


class SeedStream:
    """
    Hands out per-replication generators and named child streams.

    Child streams keep one purpose (e.g. atom sampling) independent of how
    many draws another purpose consumed.
    """

    def __init__(self, seed: int):
        self._seed = seed & MASK64

    @property
    def seed(self) -> int:
        return self._seed

    def replication(self, index: int) -> np.random.Generator:
        return make_rng(self._seed, index)

    def fork(self, index: int) -> "SeedStream":
        return SeedStream(derive_seed(self._seed, index))
