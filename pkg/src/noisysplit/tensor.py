"""Numeric primitives: fixed-order matmul, norms, softmax and seeded random streams.

Tensors are plain float64 numpy arrays. The only thing this module adds on top of
numpy is a guarantee about reduction order: ``matmul`` sums over the inner
dimension strictly left to right, so results are bit-for-bit reproducible and
match a naive triple loop exactly (BLAS gives no such promise).
"""
from __future__ import annotations

import hashlib

import numba
import numpy as np

from .errors import ConfigError, DimensionError

_MASK64 = (1 << 64) - 1


@numba.njit(cache=True)
def _matmul_kernel(a, b, out):
    m, k = a.shape
    n = b.shape[1]
    for i in range(m):
        for p in range(k):
            aip = a[i, p]
            for j in range(n):
                out[i, j] += aip * b[p, j]


def matmul(a, b):
    """Matrix product ``a @ b`` with a fixed left-to-right summation over k."""
    a = np.ascontiguousarray(a, dtype=np.float64)
    b = np.ascontiguousarray(b, dtype=np.float64)
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise DimensionError(f"cannot multiply shapes {a.shape} and {b.shape}")
    out = np.zeros((a.shape[0], b.shape[1]))
    _matmul_kernel(a, b, out)
    return out


@numba.njit(cache=True)
def _sum_sq_kernel(flat, acc):
    for i in range(flat.shape[0]):
        acc += flat[i] * flat[i]
    return acc


def sum_sq(*arrays):
    """Sum of squares over all arrays, strictly in argument then row-major order."""
    acc = 0.0
    for arr in arrays:
        acc = _sum_sq_kernel(np.ascontiguousarray(arr, dtype=np.float64).ravel(), acc)
    return float(acc)


def l2_norm(*arrays):
    """Euclidean norm of the concatenation of every element of every array."""
    return float(np.sqrt(sum_sq(*arrays)))


def softmax(logits):
    """Softmax along the last axis, shifted by the max for overflow safety."""
    z = np.asarray(logits, dtype=np.float64)
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def log_softmax(logits):
    z = np.asarray(logits, dtype=np.float64)
    z = z - z.max(axis=-1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=-1, keepdims=True))


class SeededRng:
    """A single-owner random stream that can fork named, independent children.

    Backed by numpy's counter-based Philox generator. A child's seed is a hash of
    the parent seed and the label, so adding draws in one consumer never shifts
    the draws seen by another.
    """

    def __init__(self, seed):
        seed = int(seed)
        if seed < 0:
            raise ConfigError(f"seed must be non-negative, got {seed}")
        self.seed = seed & _MASK64
        self.gen = np.random.Generator(np.random.Philox(self.seed))

    def substream(self, label):
        if not label:
            raise ConfigError("substream label must be nonempty")
        digest = hashlib.sha256(f"{self.seed}/{label}".encode()).digest()
        return SeededRng(int.from_bytes(digest[:8], "little"))

    # thin delegation so callers rarely need .gen directly
    def random(self, size=None):
        return self.gen.random(size)

    def uniform(self, low, high, size=None):
        return self.gen.uniform(low, high, size)

    def normal(self, loc=0.0, scale=1.0, size=None):
        return self.gen.normal(loc, scale, size)

    def integers(self, low, high=None, size=None):
        return self.gen.integers(low, high, size)

    def permutation(self, n):
        return self.gen.permutation(n)

    def __repr__(self):
        return f"SeededRng(seed={self.seed})"


def rng_substream(rng, label):
    return rng.substream(label)
