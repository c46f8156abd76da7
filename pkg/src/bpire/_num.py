"""Shared numerical helpers: stable log-sum-exp accumulation and reductions."""
from __future__ import annotations

import math

import numpy as np


class LogSumExpAccumulator:
    """Streaming log(sum(exp(t_k))) with running-maximum rescaling.

    Terms arrive as logs t_k.  The accumulator keeps the running maximum m and
    a compensated (Kahan) sum of exp(t_k - m), rescaling the sum whenever a new
    maximum arrives.  Safe for |t_k| up to ~700 e-folds of spread.
    """

    __slots__ = ("_max", "_sum", "_comp")

    def __init__(self) -> None:
        self._max = -math.inf
        self._sum = 0.0
        self._comp = 0.0

    def add(self, log_term: float) -> None:
        if log_term == -math.inf:
            return
        if log_term > self._max:
            scale = math.exp(self._max - log_term) if self._max > -math.inf else 0.0
            self._sum *= scale
            self._comp *= scale
            self._max = log_term
        # Kahan step on exp(log_term - max), which is <= 1 by construction
        y = math.exp(log_term - self._max) - self._comp
        t = self._sum + y
        self._comp = (t - self._sum) - y
        self._sum = t

    def result(self) -> float:
        if self._max == -math.inf:
            return -math.inf
        return self._max + math.log(self._sum)


def logsumexp_1d(log_terms: np.ndarray) -> float:
    """log(sum(exp(...))) of a 1-d array via max-shift; -inf for empty input."""
    a = np.asarray(log_terms, dtype=np.float64)
    if a.size == 0:
        return -math.inf
    m = float(a.max())
    if m == -math.inf:
        return -math.inf
    return m + math.log(float(np.exp(a - m).sum()))


def logsumexp_rows(block: np.ndarray) -> np.ndarray:
    """Row-wise log(sum(exp(...))) of a 2-d array via max-shift.

    Zero-width input yields -inf rows (empty sums), matching logsumexp_1d.
    """
    if block.shape[1] == 0:
        return np.full(block.shape[0], -math.inf)
    m = block.max(axis=1)
    out = m + np.log(np.exp(block - m[:, None]).sum(axis=1))
    return out


def _pairwise_sum(a: np.ndarray, lo: int, hi: int) -> float:
    n = hi - lo
    if n <= 8:
        s = 0.0
        for k in range(lo, hi):
            s += float(a[k])
        return s
    mid = lo + n // 2
    return _pairwise_sum(a, lo, mid) + _pairwise_sum(a, mid, hi)


def pairwise_mean(values: np.ndarray) -> float:
    """Mean by a fixed-order pairwise tree over an index-ordered array.

    The reduction order depends only on the array length, never on worker
    scheduling, so the result is bit-for-bit reproducible.
    """
    a = np.asarray(values, dtype=np.float64)
    if a.size == 0:
        raise ValueError("empty reduction")
    return _pairwise_sum(a, 0, a.size) / a.size
