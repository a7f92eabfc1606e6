"""NumPy fallback for the mask kernels; same contract as the compiled module."""

import numpy as np


def count_true(buf):
    return int(np.count_nonzero(buf))


def count_and(a, b):
    if a.shape[0] != b.shape[0]:
        raise ValueError("buffer length mismatch")
    return int(np.count_nonzero(a & b))


def or_into(acc, b):
    if acc.shape[0] != b.shape[0]:
        raise ValueError("buffer length mismatch")
    np.bitwise_or(acc, b, out=acc)


def encode_runs(buf):
    n = buf.shape[0]
    changes = np.flatnonzero(buf[1:] != buf[:-1]) + 1
    bounds = np.concatenate(([0], changes, [n]))
    runs = np.diff(bounds).tolist()
    if n and buf[0]:
        runs.insert(0, 0)
    return runs


def decode_runs(runs, n):
    arr = np.asarray(list(runs), dtype=np.int64)
    if arr.size and int(arr.min()) < 0:
        raise ValueError("run lengths do not sum to buffer size")
    if int(arr.sum()) != n:
        raise ValueError("run lengths do not sum to buffer size")
    values = np.zeros(arr.size, dtype=np.uint8)
    values[1::2] = 1
    return np.repeat(values, arr)
