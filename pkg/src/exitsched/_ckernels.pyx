# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled hot loops. Mirrors _pykernels.py operation for operation."""

from array import array

from libc.math cimport exp, log
from libc.stdint cimport int64_t, uint64_t


def urgency_sum(const int64_t[:] arrivals, Py_ssize_t start, int64_t offset,
                double tau, double clip):
    cdef double total = 0.0
    cdef double u
    cdef Py_ssize_t i
    cdef Py_ssize_t n = arrivals.shape[0]
    for i in range(start, n):
        u = exp(<double>(offset - arrivals[i]) / tau - 1.0)
        total += u if u < clip else clip
    return total


cdef inline uint64_t rotl(uint64_t x, int k) nogil:
    return (x << k) | (x >> (64 - k))


def poisson_arrivals(words, double rate_per_s, double horizon_us):
    cdef uint64_t s0 = <uint64_t>(words[0] & 0xFFFFFFFFFFFFFFFF)
    cdef uint64_t s1 = <uint64_t>(words[1] & 0xFFFFFFFFFFFFFFFF)
    cdef uint64_t s2 = <uint64_t>(words[2] & 0xFFFFFFFFFFFFFFFF)
    cdef uint64_t s3 = <uint64_t>(words[3] & 0xFFFFFFFFFFFFFFFF)
    cdef uint64_t x, tt
    cdef double mean_gap_us = 1e6 / rate_per_s
    cdef double t = 0.0
    cdef double u
    out = array("q")
    while True:
        x = rotl(s1 * 5, 7) * 9
        tt = s1 << 17
        s2 ^= s0
        s3 ^= s1
        s1 ^= s2
        s0 ^= s3
        s2 ^= tt
        s3 = rotl(s3, 45)
        u = <double>(x >> 11) * 1.1102230246251565e-16
        t += -log(1.0 - u) * mean_gap_us
        if t >= horizon_us:
            return out
        out.append(<int64_t>t)
