"""Portable pseudo-random streams.

The generator is xoshiro256** seeded through splitmix64, so any port that
implements the two published algorithms reproduces the same streams:

* ``stream_seed(master, k)`` runs splitmix64 from
  ``master ^ ((k + 1) * 0xD1B54A32D192ED03 mod 2**64)`` and takes its first
  four outputs as the xoshiro state of stream ``k``.
* a uniform draw is ``(next() >> 11) * 2**-53``, which lies in ``[0, 1)``.

Stream ``k`` for ``k < M`` feeds the arrivals of model ``k``; stream ``M`` feeds
the optional service-time noise.
"""

from __future__ import annotations

import math

MASK64 = 0xFFFFFFFFFFFFFFFF
GOLDEN = 0x9E3779B97F4A7C15
STREAM_MIX = 0xD1B54A32D192ED03
TWO_POW_M53 = 2.0 ** -53


def splitmix64(state: int) -> tuple[int, int]:
    """Advance a splitmix64 state; return ``(new_state, output)``."""
    state = (state + GOLDEN) & MASK64
    z = state
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return state, z ^ (z >> 31)


def stream_seed(master_seed: int, stream: int) -> tuple[int, int, int, int]:
    state = (master_seed ^ (((stream + 1) * STREAM_MIX) & MASK64)) & MASK64
    words = []
    for _ in range(4):
        state, out = splitmix64(state)
        words.append(out)
    return tuple(words)  # type: ignore[return-value]


def _rotl(x: int, k: int) -> int:
    return ((x << k) | (x >> (64 - k))) & MASK64


class Xoshiro256:
    """xoshiro256** with 64-bit outputs."""

    __slots__ = ("s",)

    def __init__(self, words: tuple[int, int, int, int]):
        if not any(words):
            raise ValueError("xoshiro state must not be all zero")
        self.s = [w & MASK64 for w in words]

    @classmethod
    def for_stream(cls, master_seed: int, stream: int) -> "Xoshiro256":
        return cls(stream_seed(master_seed, stream))

    def next_u64(self) -> int:
        s = self.s
        result = (_rotl((s[1] * 5) & MASK64, 7) * 9) & MASK64
        t = (s[1] << 17) & MASK64
        s[2] ^= s[0]
        s[3] ^= s[1]
        s[1] ^= s[2]
        s[0] ^= s[3]
        s[2] ^= t
        s[3] = _rotl(s[3], 45)
        return result

    def uniform(self) -> float:
        return (self.next_u64() >> 11) * TWO_POW_M53

    def normal(self) -> float:
        # Box-Muller, cosine branch only; one normal per two uniforms.
        u1 = self.uniform()
        u2 = self.uniform()
        return math.sqrt(-2.0 * math.log(1.0 - u1)) * math.cos(2.0 * math.pi * u2)
