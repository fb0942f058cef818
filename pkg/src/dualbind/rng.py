"""Self-contained seeded PRNG so "same seed" means the same bytes everywhere.

The generator is xorshift64* seeded through one splitmix64 scramble:

    splitmix64:  s += 0x9E3779B97F4A7C15
                 z = s; z = (z ^ z>>30) * 0xBF58476D1CE4E5B9
                 z = (z ^ z>>27) * 0x94D049BB133111EB
                 return z ^ z>>31
    xorshift64*: x ^= x>>12; x ^= x<<25; x ^= x>>27
                 output = (x * 0x2545F4914F6CDD1D) >> 11  -> 53-bit mantissa

Uniform doubles are the 53 high bits scaled by 2^-53; normals come from the
Box-Muller transform on two uniforms. Per-item substreams derive as
``derive(seed, index)`` = splitmix64 of (seed XOR golden-ratio-mixed index),
so sharded generation is order-independent.
"""

from __future__ import annotations

import math

_MASK = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15


def _splitmix64(state: int) -> tuple[int, int]:
    state = (state + _GOLDEN) & _MASK
    z = state
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK
    return state, z ^ (z >> 31)


def derive(seed: int, index: int) -> int:
    """Substream seed for item ``index`` of stream ``seed``."""
    _, mixed = _splitmix64((seed ^ ((index * _GOLDEN) & _MASK)) & _MASK)
    return mixed


class XorShiftRng:
    def __init__(self, seed: int):
        state, z = _splitmix64(seed & _MASK)
        # 0 is the one forbidden xorshift state
        self._x = z if z != 0 else state | 1

    def next_u64(self) -> int:
        x = self._x
        x ^= (x >> 12)
        x = (x ^ (x << 25)) & _MASK
        x ^= (x >> 27)
        self._x = x
        return (x * 0x2545F4914F6CDD1D) & _MASK

    def uniform(self) -> float:
        """Uniform double in [0, 1)."""
        return (self.next_u64() >> 11) * (2.0**-53)

    def randint(self, lo: int, hi: int) -> int:
        """Uniform integer in [lo, hi] inclusive."""
        if hi < lo:
            raise ValueError(f"randint: empty range [{lo}, {hi}]")
        return lo + int(self.uniform() * (hi - lo + 1))

    def normal(self, mean: float = 0.0, std: float = 1.0) -> float:
        u1 = self.uniform()
        u2 = self.uniform()
        while u1 == 0.0:
            u1 = self.uniform()
        return mean + std * math.sqrt(-2.0 * math.log(u1)) * math.cos(2.0 * math.pi * u2)

    def choice(self, items):
        return items[self.randint(0, len(items) - 1)]

    def shuffle(self, items: list) -> None:
        """In-place Fisher-Yates."""
        for i in range(len(items) - 1, 0, -1):
            j = self.randint(0, i)
            items[i], items[j] = items[j], items[i]
