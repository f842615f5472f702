"""Seeded SplitMix64 generator with Box-Muller normals.

The stream is defined entirely by 64-bit integer arithmetic, so identical
seeds give identical draws on every IEEE-754 platform.
"""

import math

import numpy as np

MASK64 = (1 << 64) - 1
GOLDEN_GAMMA = 0x9E3779B97F4A7C15
_MIX1 = 0xBF58476D1CE4E5B9
_MIX2 = 0x94D049BB133111EB
_TWO_POW_M53 = 1.0 / (1 << 53)


def _mix(z):
    z = ((z ^ (z >> 30)) * _MIX1) & MASK64
    z = ((z ^ (z >> 27)) * _MIX2) & MASK64
    return z ^ (z >> 31)


def _mix_array(z):
    z = (z ^ (z >> np.uint64(30))) * np.uint64(_MIX1)
    z = (z ^ (z >> np.uint64(27))) * np.uint64(_MIX2)
    return z ^ (z >> np.uint64(31))


class Rng:
    """SplitMix64 stream. ``state`` is the full generator state."""

    def __init__(self, seed=0):
        self.state = int(seed) & MASK64

    def next_u64(self):
        self.state = (self.state + GOLDEN_GAMMA) & MASK64
        return _mix(self.state)

    def u64_array(self, n):
        """Next ``n`` outputs as a uint64 array, identical to ``n`` calls of next_u64."""
        if n <= 0:
            return np.zeros(0, dtype=np.uint64)
        steps = np.arange(1, n + 1, dtype=np.uint64) * np.uint64(GOLDEN_GAMMA)
        states = np.uint64(self.state) + steps
        self.state = (self.state + n * GOLDEN_GAMMA) & MASK64
        return _mix_array(states)

    def uniform(self, n=None):
        """Uniform doubles in [0, 1) from the top 53 bits."""
        if n is None:
            return (self.next_u64() >> 11) * _TWO_POW_M53
        return (self.u64_array(n) >> np.uint64(11)).astype(np.float64) * _TWO_POW_M53

    def uniform_range(self, low, high, n):
        return low + (high - low) * self.uniform(n)

    def normal(self, n):
        """``n`` standard normals; uniforms are consumed in pairs (Box-Muller)."""
        pairs = (n + 1) // 2
        u = self.uniform(2 * pairs)
        u1, u2 = u[0::2], u[1::2]
        r = np.sqrt(-2.0 * np.log1p(-u1))
        theta = 2.0 * math.pi * u2
        out = np.empty(2 * pairs)
        out[0::2] = r * np.cos(theta)
        out[1::2] = r * np.sin(theta)
        return out[:n]

    def randint(self, n):
        """Integer in [0, n)."""
        return int(self.uniform() * n)

    def permutation(self, n):
        """Fisher-Yates shuffle of range(n)."""
        perm = list(range(n))
        for i in range(n - 1, 0, -1):
            j = self.randint(i + 1)
            perm[i], perm[j] = perm[j], perm[i]
        return perm

    def spawn(self):
        """Independent child stream seeded from this one."""
        return Rng(self.next_u64())
