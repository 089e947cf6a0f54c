"""Seeded 64-bit generators shared by the compiled and pure-Python kernels.

Both backends draw from the same xoshiro256** stream, so a chain run with the
compiled extension and one run with the fallback are bit-identical for the same
seed. ``site_uniform`` is the counter-based generator keyed by (seed, site) used
by lazy obstacle environments.
"""

from __future__ import annotations

import math

MASK64 = 0xFFFFFFFFFFFFFFFF
_INV53 = 1.0 / 9007199254740992.0  # 2**-53


def splitmix64(x: int) -> tuple[int, int]:
    """Advance a splitmix64 counter; returns (new_counter, output)."""
    x = (x + 0x9E3779B97F4A7C15) & MASK64
    z = x
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return x, z ^ (z >> 31)


def mix64(x: int) -> int:
    return splitmix64(x & MASK64)[1]


def seed_state(seed: int) -> tuple[int, int, int, int]:
    """Expand a 64-bit seed into a xoshiro256** state."""
    x = seed & MASK64
    out = []
    for _ in range(4):
        x, z = splitmix64(x)
        out.append(z)
    if not any(out):
        out[0] = 1
    return tuple(out)  # type: ignore[return-value]


def derive_seed(seed: int, *keys: int) -> int:
    """Deterministic child seed for (seed, key1, key2, ...), e.g. per chain."""
    h = mix64(seed)
    for k in keys:
        h = mix64(h ^ (k & MASK64))
    return h


def site_uniform(seed: int, coords) -> float:
    """Uniform [0, 1) value attached to a lattice site, pure in (seed, coords)."""
    h = mix64(seed ^ 0x5851F42D4C957F2D)
    for c in coords:
        h = mix64(h ^ (int(c) & MASK64))
    return (h >> 11) * _INV53


def _rotl(x: int, k: int) -> int:
    return ((x << k) | (x >> (64 - k))) & MASK64


class Xoshiro256:
    """xoshiro256** in pure Python. Slow, but the reference for the C version."""

    __slots__ = ("s0", "s1", "s2", "s3")

    def __init__(self, state):
        self.s0, self.s1, self.s2, self.s3 = (int(v) & MASK64 for v in state)

    @classmethod
    def from_seed(cls, seed: int) -> "Xoshiro256":
        return cls(seed_state(seed))

    def get_state(self) -> tuple[int, int, int, int]:
        return (self.s0, self.s1, self.s2, self.s3)

    def next_u64(self) -> int:
        s0, s1, s2, s3 = self.s0, self.s1, self.s2, self.s3
        result = (_rotl((s1 * 5) & MASK64, 7) * 9) & MASK64
        t = (s1 << 17) & MASK64
        s2 ^= s0
        s3 ^= s1
        s1 ^= s2
        s0 ^= s3
        s2 ^= t
        s3 = _rotl(s3, 45)
        self.s0, self.s1, self.s2, self.s3 = s0, s1, s2, s3
        return result

    def random(self) -> float:
        return (self.next_u64() >> 11) * _INV53

    def randbelow(self, n: int) -> int:
        return int(self.random() * n)

    def geometric(self, mean: float, cap: int) -> int:
        """Length on {1, 2, ...} with the given mean, truncated at ``cap``."""
        if mean <= 1.0:
            return 1
        u = self.random()
        length = 1 + int(math.log1p(-u) / math.log1p(-1.0 / mean))
        return length if length < cap else cap
