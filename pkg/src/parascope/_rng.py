"""Deterministic pseudo-randomness built on splitmix64.

splitmix64 (Steele/Lea/Flood 2014) is the package-wide generator: a
64-bit add/xor/shift mixer that is trivial to reimplement in any
language, which keeps synthetic slides, dataset splits, and fault
schedules bit-reproducible outside this codebase. numpy vectorization
of the same mix function serves per-pixel noise fields.
"""

from __future__ import annotations

import numpy as np

_MASK = (1 << 64) - 1
_GAMMA = 0x9E3779B97F4A7C15


def _mix(z: int) -> int:
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9 & _MASK
    z = (z ^ (z >> 27)) * 0x94D049BB133111EB & _MASK
    return z ^ (z >> 31)


class SplitMix64:
    """Sequential splitmix64 stream."""

    def __init__(self, seed: int):
        self._state = seed & _MASK

    def next_u64(self) -> int:
        self._state = (self._state + _GAMMA) & _MASK
        return _mix(self._state)

    def random(self) -> float:
        """Uniform float in [0, 1) with 53 bits of precision."""
        return (self.next_u64() >> 11) * 2.0 ** -53

    def uniform(self, lo: float, hi: float) -> float:
        return lo + (hi - lo) * self.random()

    def randint(self, n: int) -> int:
        """Uniform integer in [0, n) by rejection (unbiased)."""
        if n <= 0:
            raise ValueError("n must be positive")
        limit = (1 << 64) - ((1 << 64) % n)
        while True:
            x = self.next_u64()
            if x < limit:
                return x % n

    def shuffle(self, items: list) -> None:
        """In-place Fisher-Yates shuffle."""
        for i in range(len(items) - 1, 0, -1):
            j = self.randint(i + 1)
            items[i], items[j] = items[j], items[i]


def _mix_vec(z: np.ndarray) -> np.ndarray:
    z = (z ^ (z >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
    z = (z ^ (z >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
    return z ^ (z >> np.uint64(31))


def noise_field(seed: int, shape: tuple[int, ...]) -> np.ndarray:
    """Uniform [0,1) field; element i equals the i-th draw of SplitMix64(seed)."""
    n = int(np.prod(shape))
    steps = np.arange(1, n + 1, dtype=np.uint64)
    state = np.uint64(seed & _MASK) + steps * np.uint64(_GAMMA)
    u = _mix_vec(state)
    return ((u >> np.uint64(11)).astype(np.float64) * 2.0 ** -53).reshape(shape)
