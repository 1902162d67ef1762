"""Portable seeded random number generation.

Every random draw in the package (weight init, shuffling, render jitter)
goes through :class:`XorShift64Star` so that a corpus or a training run is
reproducible bit-for-bit from its seed, independent of numpy's generator
implementations.

Algorithm (part of the on-disk reproducibility contract):

* seeding: ``state = splitmix64(seed)``; a zero result is replaced by
  ``0x9E3779B97F4A7C15``.
* step (xorshift64*, Vigna 2014)::

      x ^= x >> 12; x ^= x << 25; x ^= x >> 27
      out = x * 0x2545F4914F6CDD1D   (mod 2**64)

* ``random()`` = ``(out >> 11) * 2**-53``, in [0, 1).
* ``randbelow(n)`` = ``floor(random() * n)``.
* ``shuffle`` is Fisher-Yates running from the last index down.
"""

from __future__ import annotations

import numpy as np

MASK64 = (1 << 64) - 1
MULTIPLIER = 0x2545F4914F6CDD1D
GOLDEN = 0x9E3779B97F4A7C15
INV_2_53 = 1.0 / (1 << 53)


def splitmix64(seed: int) -> int:
    z = (seed + GOLDEN) & MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return z ^ (z >> 31)


class XorShift64Star:
    """xorshift64* generator with splitmix64 seeding."""

    def __init__(self, seed: int):
        state = splitmix64(int(seed) & MASK64)
        self.state = state if state else GOLDEN

    def next_u64(self) -> int:
        x = self.state
        x ^= x >> 12
        x ^= (x << 25) & MASK64
        x ^= x >> 27
        self.state = x
        return (x * MULTIPLIER) & MASK64

    def random(self) -> float:
        return (self.next_u64() >> 11) * INV_2_53

    def uniform(self, lo: float, hi: float) -> float:
        return lo + (hi - lo) * self.random()

    def randbelow(self, n: int) -> int:
        if n <= 0:
            raise ValueError("randbelow requires n >= 1")
        return int(self.random() * n)

    def randint(self, lo: int, hi: int) -> int:
        """Integer in the closed range [lo, hi]."""
        return lo + self.randbelow(hi - lo + 1)

    def random_array(self, n: int) -> np.ndarray:
        """``n`` consecutive ``random()`` draws as a float64 array."""
        from . import kernels

        out, self.state = kernels.xorshift_fill(self.state, int(n))
        return out

    def uniform_array(self, shape, scale: float) -> np.ndarray:
        """Uniform(-scale, scale) draws in row-major order."""
        n = int(np.prod(shape, dtype=np.int64))
        u = self.random_array(n)
        return (scale * (2.0 * u - 1.0)).reshape(shape)

    def shuffle(self, items: list) -> None:
        for i in range(len(items) - 1, 0, -1):
            j = self.randbelow(i + 1)
            items[i], items[j] = items[j], items[i]

    def permutation(self, n: int) -> list[int]:
        idx = list(range(n))
        self.shuffle(idx)
        return idx
