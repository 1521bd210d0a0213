"""Portable seeded random streams built on SplitMix64.

SplitMix64 is used instead of numpy's generators so that synthetic corpora
are reproducible bit-for-bit by any implementation that follows the same
recipe:

    state += 0x9E3779B97F4A7C15
    z = state
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9
    z = (z ^ (z >> 27)) * 0x94D049BB133111EB
    z = z ^ (z >> 31)

Uniform doubles take the top 53 bits: ``(z >> 11) * 2**-53``. Normals use
Box-Muller on consecutive uniform pairs (u1, u2), taking
``sqrt(-2 ln(1 - u1)) * cos(2 pi u2)`` and discarding the sine branch.
"""

from __future__ import annotations

import numpy as np

GAMMA = 0x9E3779B97F4A7C15
MASK64 = (1 << 64) - 1

_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)


def _mix(z: np.ndarray) -> np.ndarray:
    with np.errstate(over="ignore"):
        z = (z ^ (z >> np.uint64(30))) * _M1
        z = (z ^ (z >> np.uint64(27))) * _M2
    return z ^ (z >> np.uint64(31))


def mix64(x: int) -> int:
    """Scalar SplitMix64 finalizer."""
    return int(_mix(np.array([x & MASK64], dtype=np.uint64))[0])


class SplitMix64:
    """Counter-style SplitMix64 stream; draws are vectorized over numpy."""

    def __init__(self, seed: int):
        self.state = int(seed) & MASK64

    def next_u64(self, n: int) -> np.ndarray:
        k = np.arange(1, n + 1, dtype=np.uint64)
        with np.errstate(over="ignore"):
            z = np.uint64(self.state) + k * np.uint64(GAMMA)
        self.state = (self.state + n * GAMMA) & MASK64
        return _mix(z)

    def uniform(self, n: int) -> np.ndarray:
        return (self.next_u64(n) >> np.uint64(11)).astype(np.float64) * (2.0**-53)

    def normal(self, shape) -> np.ndarray:
        shape = (shape,) if isinstance(shape, int) else tuple(shape)
        n = int(np.prod(shape)) if shape else 1
        u = self.uniform(2 * n)
        u1, u2 = u[0::2], u[1::2]
        z = np.sqrt(-2.0 * np.log1p(-u1)) * np.cos(2.0 * np.pi * u2)
        return z.reshape(shape)

    def integers(self, high: int, n: int) -> np.ndarray:
        """n draws uniform on [0, high)."""
        return np.minimum((self.uniform(n) * high).astype(np.int64), high - 1)

    def permutation(self, n: int) -> np.ndarray:
        """Fisher-Yates shuffle of range(n), walking i from n-1 down to 1."""
        perm = np.arange(n, dtype=np.int64)
        if n < 2:
            return perm
        u = self.uniform(n - 1)
        for step, i in enumerate(range(n - 1, 0, -1)):
            j = min(int(u[step] * (i + 1)), i)
            perm[i], perm[j] = perm[j], perm[i]
        return perm

    def choice(self, n: int, k: int) -> np.ndarray:
        """k distinct indices from range(n), in draw order."""
        return self.permutation(n)[:k]


def stream(seed: int, index: int) -> SplitMix64:
    """Independent sub-stream ``index`` derived from a master seed."""
    return SplitMix64(mix64((int(seed) + int(index) * GAMMA) & MASK64))
