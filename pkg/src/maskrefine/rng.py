"""Seeded PRNG used by the synthetic benchmark and training harness.

The generator is splitmix64 with the published constants.  Its state update
is a plain 64-bit counter increment, so arbitrary spans of the stream can be
produced as vectorized numpy expressions without changing the output
sequence.  Everything downstream (scene geometry, corruption, feature noise,
jitter) draws from this one primitive, which keeps reports bit-reproducible
for a given seed.
"""

from __future__ import annotations

import numpy as np

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_MIX1 = np.uint64(0xBF58476D1CE4E5B9)
_MIX2 = np.uint64(0x94D049BB133111EB)
_U64 = np.uint64
_INV_2_53 = 1.0 / float(1 << 53)


def _mix(state: np.ndarray) -> np.ndarray:
    # u64 wraparound is the point; silence numpy's scalar overflow warning
    with np.errstate(over="ignore"):
        z = state
        z = (z ^ (z >> _U64(30))) * _MIX1
        z = (z ^ (z >> _U64(27))) * _MIX2
        return z ^ (z >> _U64(31))


class SplitMix64:
    """Counter-based splitmix64 stream."""

    def __init__(self, seed: int):
        self._seed = _U64(seed & 0xFFFFFFFFFFFFFFFF)
        self._counter = 0

    def spawn(self, stream: int) -> "SplitMix64":
        """Derive an independent child generator (e.g. one per scene)."""
        return SplitMix64(int(self.next_u64()) ^ int(_mix(_U64(stream & 0xFFFFFFFFFFFFFFFF))))

    def next_u64(self) -> np.uint64:
        return self.u64(1)[0]

    def u64(self, n: int) -> np.ndarray:
        start = self._counter
        self._counter += n
        with np.errstate(over="ignore"):
            idx = np.arange(start + 1, start + n + 1, dtype=np.uint64)
            states = self._seed + idx * _GOLDEN
            return _mix(states)

    def uniform(self, n: int) -> np.ndarray:
        """n float64 samples in [0, 1), 53-bit resolution."""
        return (self.u64(n) >> _U64(11)).astype(np.float64) * _INV_2_53

    def normal(self, n: int) -> np.ndarray:
        """n standard-normal samples via Box-Muller (pairs of uniforms)."""
        m = (n + 1) // 2
        u = self.u64(2 * m)
        # u1 in (0, 1] so the log is finite
        u1 = ((u[:m] >> _U64(11)).astype(np.float64) + 1.0) * _INV_2_53
        u2 = (u[m:] >> _U64(11)).astype(np.float64) * _INV_2_53
        r = np.sqrt(-2.0 * np.log(u1))
        theta = 2.0 * np.pi * u2
        out = np.concatenate([r * np.cos(theta), r * np.sin(theta)])
        return out[:n]

    def below(self, bound: int) -> int:
        """One integer in [0, bound)."""
        if bound <= 0:
            raise ValueError("bound must be positive")
        return min(int(self.uniform(1)[0] * bound), bound - 1)

    def randint(self, lo: int, hi: int) -> int:
        """One integer in [lo, hi] inclusive."""
        if hi < lo:
            raise ValueError("empty range")
        return lo + self.below(hi - lo + 1)

    def shuffle(self, items: list) -> None:
        """In-place Fisher-Yates shuffle."""
        for i in range(len(items) - 1, 0, -1):
            j = self.below(i + 1)
            items[i], items[j] = items[j], items[i]
