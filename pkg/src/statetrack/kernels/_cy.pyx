# cython: boundscheck=False, wraparound=False
"""Compiled mask kernels: run-length codec and set-algebra counts.

Buffers are flat uint8 views of bool arrays, so every byte is 0 or 1; the
word-at-a-time paths rely on that.
"""

import numpy as np

from libc.stdint cimport uint64_t
from libc.string cimport memcpy, memset

cdef uint64_t _ONES = 0x0101010101010101ULL


def count_true(const unsigned char[::1] buf):
    cdef Py_ssize_t i = 0, n = buf.shape[0]
    cdef long long total = 0
    cdef uint64_t word
    if n == 0:
        return 0
    cdef const unsigned char* p = &buf[0]
    while i + 8 <= n:
        memcpy(&word, p + i, 8)
        total += <long long>((word * _ONES) >> 56)
        i += 8
    while i < n:
        if p[i]:
            total += 1
        i += 1
    return total


def count_and(const unsigned char[::1] a, const unsigned char[::1] b):
    cdef Py_ssize_t i = 0, n = a.shape[0]
    cdef long long total = 0
    cdef uint64_t wa, wb
    if b.shape[0] != n:
        raise ValueError("buffer length mismatch")
    if n == 0:
        return 0
    cdef const unsigned char* pa = &a[0]
    cdef const unsigned char* pb = &b[0]
    while i + 8 <= n:
        memcpy(&wa, pa + i, 8)
        memcpy(&wb, pb + i, 8)
        total += <long long>(((wa & wb) * _ONES) >> 56)
        i += 8
    while i < n:
        if pa[i] and pb[i]:
            total += 1
        i += 1
    return total


def or_into(unsigned char[::1] acc, const unsigned char[::1] b):
    cdef Py_ssize_t i = 0, n = acc.shape[0]
    cdef uint64_t wa, wb
    if b.shape[0] != n:
        raise ValueError("buffer length mismatch")
    if n == 0:
        return
    cdef unsigned char* pa = &acc[0]
    cdef const unsigned char* pb = &b[0]
    while i + 8 <= n:
        memcpy(&wa, pa + i, 8)
        memcpy(&wb, pb + i, 8)
        wa |= wb
        memcpy(pa + i, &wa, 8)
        i += 8
    while i < n:
        if pb[i]:
            pa[i] = 1
        i += 1


def encode_runs(const unsigned char[::1] buf):
    """Alternating run lengths, leading false-run possibly 0; skips whole
    words inside long runs."""
    cdef Py_ssize_t i = 0, n = buf.shape[0]
    cdef Py_ssize_t start
    cdef unsigned char val = 0
    cdef uint64_t word, expect
    runs = []
    if n == 0:
        return [0]
    cdef const unsigned char* p = &buf[0]
    while i < n:
        start = i
        expect = _ONES if val else 0
        while i + 8 <= n:
            memcpy(&word, p + i, 8)
            if word != expect:
                break
            i += 8
        while i < n and (p[i] != 0) == (val != 0):
            i += 1
        runs.append(i - start)
        val = 0 if val else 1
    return runs


def decode_runs(runs, Py_ssize_t n):
    """Inverse of encode_runs; raises ValueError unless the runs sum to n."""
    out = np.zeros(n, dtype=np.uint8)
    cdef unsigned char[::1] buf = out
    cdef Py_ssize_t pos = 0, r
    cdef unsigned char val = 0
    cdef unsigned char* p = &buf[0] if n else NULL
    for item in runs:
        r = item
        if r < 0 or pos + r > n:
            raise ValueError("run lengths do not sum to buffer size")
        if val and r:
            memset(p + pos, 1, r)
        pos += r
        val = 0 if val else 1
    if pos != n:
        raise ValueError("run lengths do not sum to buffer size")
    return out
