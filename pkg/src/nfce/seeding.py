"""Deterministic 64-bit seed derivation for reproducible sampling.

Every random draw in the package goes through a ``numpy.random.Generator``
created from an explicit seed. Derived streams (per-sample, per-cell) use a
stateless mixing function so that work can be split or reordered across
workers without changing any result.
"""

import numpy as np

_GOLDEN = 0x9E3779B97F4A7C15
_MASK = (1 << 64) - 1


def splitmix64(x: int) -> int:
    """One round of the splitmix64 finalizer. Input and output are u64."""
    z = (x + _GOLDEN) & _MASK
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK
    return z ^ (z >> 31)


def mix_seed(base: int, index: int) -> int:
    """Derive the seed of substream ``index`` from ``base``.

    Stateless: mix_seed(b, i) never depends on other indices, so datasets
    can be generated in any order or in parallel with identical output.
    """
    if index < 0:
        raise ValueError(f"substream index must be >= 0, got {index}")
    return splitmix64((base ^ ((index + 1) * _GOLDEN)) & _MASK)


def make_rng(seed: int) -> np.random.Generator:
    """PCG64 generator for a (possibly mixed) 64-bit seed."""
    return np.random.Generator(np.random.PCG64(seed & _MASK))
