"""Pure-Python versions of the hot loops.

Must stay bit-identical to ``_ckernels.pyx``: same operation order, same libm
calls, same truncation.
"""

from __future__ import annotations

import math
from array import array

from .rng import MASK64, TWO_POW_M53

exp = math.exp
log = math.log
INF = math.inf


def urgency_sum(arrivals, start, offset, tau, clip):
    """Sum of ``min(exp(w / tau - 1), clip)`` with ``w = offset - arrivals[i]``
    over ``i >= start``."""
    total = 0.0
    for i in range(start, len(arrivals)):
        try:
            u = exp((offset - arrivals[i]) / tau - 1.0)
        except OverflowError:  # C exp returns inf here
            u = INF
        total += u if u < clip else clip
    return total


def poisson_arrivals(words, rate_per_s, horizon_us):
    """Arrival instants (integer µs, truncated) of a Poisson process on
    ``[0, horizon_us)`` driven by the xoshiro256** state ``words``."""
    s0, s1, s2, s3 = (w & MASK64 for w in words)
    mean_gap_us = 1e6 / rate_per_s
    out = array("q")
    t = 0.0
    while True:
        x = s1 * 5 & MASK64
        x = ((x << 7) | (x >> 57)) & MASK64
        x = x * 9 & MASK64
        tt = s1 << 17 & MASK64
        s2 ^= s0
        s3 ^= s1
        s1 ^= s2
        s0 ^= s3
        s2 ^= tt
        s3 = ((s3 << 45) | (s3 >> 19)) & MASK64
        u = (x >> 11) * TWO_POW_M53
        t += -log(1.0 - u) * mean_gap_us
        if t >= horizon_us:
            return out
        out.append(int(t))
