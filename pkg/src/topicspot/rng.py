"""Seeded, portable pseudo-random generator.

All randomness in the package (splits, synthetic corpora, weight init,
epoch shuffles) funnels through xoshiro256** seeded via splitmix64, so any
run is reproducible from a single integer seed and a purpose label. The
generator is spelled out here rather than taken from numpy so that split
manifests and synthetic corpora can be regenerated byte-identically by
any implementation of the same named algorithm.
"""

from __future__ import annotations

import numpy as np

_MASK64 = 0xFFFFFFFFFFFFFFFF


def splitmix64(state: int) -> tuple[int, int]:
    """One splitmix64 step: returns (new_state, output)."""
    state = (state + 0x9E3779B97F4A7C15) & _MASK64
    z = state
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return state, (z ^ (z >> 31)) & _MASK64


def _rotl(x: int, k: int) -> int:
    return ((x << k) | (x >> (64 - k))) & _MASK64


class Rng:
    """xoshiro256** generator with labeled substream derivation."""

    def __init__(self, seed: int):
        self.seed = int(seed) & _MASK64
        state, s0 = splitmix64(self.seed)
        state, s1 = splitmix64(state)
        state, s2 = splitmix64(state)
        _, s3 = splitmix64(state)
        self._s = [s0, s1, s2, s3]

    def derive(self, label: str) -> "Rng":
        """Independent child stream keyed by a purpose label."""
        h = self.seed
        for byte in label.encode("utf-8"):
            h, out = splitmix64(h ^ byte)
            h ^= out
        return Rng(h)

    def next_uint64(self) -> int:
        s = self._s
        result = (_rotl((s[1] * 5) & _MASK64, 7) * 9) & _MASK64
        t = (s[1] << 17) & _MASK64
        s[2] ^= s[0]
        s[3] ^= s[1]
        s[1] ^= s[2]
        s[0] ^= s[3]
        s[2] ^= t
        s[3] = _rotl(s[3], 45)
        return result

    def random(self) -> float:
        # 53 high bits -> float64 in [0, 1)
        return (self.next_uint64() >> 11) * (1.0 / (1 << 53))

    def randint(self, n: int) -> int:
        """Uniform integer in [0, n) without modulo bias."""
        if n <= 0:
            raise ValueError("n must be positive")
        threshold = (1 << 64) - ((1 << 64) % n)
        while True:
            r = self.next_uint64()
            if r < threshold:
                return r % n

    def uniform(self, low: float, high: float, size: int) -> np.ndarray:
        out = np.empty(size, dtype=np.float64)
        span = high - low
        for i in range(size):
            out[i] = low + span * self.random()
        return out

    def shuffle(self, items: list) -> None:
        """In-place Fisher-Yates shuffle."""
        for i in range(len(items) - 1, 0, -1):
            j = self.randint(i + 1)
            items[i], items[j] = items[j], items[i]
