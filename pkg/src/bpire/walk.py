"""The driving random walk S and its path statistics.

S_0 = 0 and S_k = X_1 + ... + X_k.  Everything downstream is a functional of
this walk: the running minimum L (which includes S_0), the running maximum M
(which starts at S_1), the first minimizing index tau(n), and the log-domain
exponential functionals

    a_{i,n} = e^{S_i - S_n},
    b_{i,n} = sum_{k=i}^{n-1} e^{S_i - S_k}.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ._num import LogSumExpAccumulator
from .env import IncrementLaw


@dataclass(frozen=True)
class WalkPath:
    """A materialized walk: n increments and the n+1 partial sums."""

    increments: np.ndarray
    partial_sums: np.ndarray

    def __post_init__(self) -> None:
        inc = np.asarray(self.increments, dtype=np.float64)
        ps = np.asarray(self.partial_sums, dtype=np.float64)
        object.__setattr__(self, "increments", inc)
        object.__setattr__(self, "partial_sums", ps)
        if ps.shape != (inc.shape[0] + 1,):
            raise ValueError("partial_sums must have one more entry than increments")
        if ps[0] != 0.0:
            raise ValueError("walk must start at 0")

    @property
    def n(self) -> int:
        return self.increments.shape[0]

    @classmethod
    def from_increments(cls, increments) -> "WalkPath":
        inc = np.asarray(increments, dtype=np.float64)
        ps = np.empty(inc.shape[0] + 1)
        ps[0] = 0.0
        np.cumsum(inc, out=ps[1:])
        return cls(inc, ps)


@dataclass(frozen=True)
class PathSummary:
    """Running extremes and the first-minimum time of one path.

    running_min has n+1 entries L_0..L_n (S_0 included); running_max has n
    entries M_1..M_n (S_0 excluded); tau_n is the FIRST index attaining L_n.
    """

    running_min: np.ndarray
    running_max: np.ndarray
    tau_n: int


def simulate_path(law: IncrementLaw, n: int, stream: np.random.Generator) -> WalkPath:
    """Simulate n i.i.d. increments from the law; S_0 = 0."""
    if n < 1:
        raise ValueError(f"horizon must be >= 1, got {n}")
    return WalkPath.from_increments(law.sample(stream, n))


def path_summary(path: WalkPath) -> PathSummary:
    """Compute L, M and tau(n); ties (possible for lattice laws) go to the first index."""
    ps = path.partial_sums
    running_min = np.minimum.accumulate(ps)
    running_max = np.maximum.accumulate(ps[1:])
    tau = int(np.argmin(ps))  # argmin returns the first minimizing index
    return PathSummary(running_min=running_min, running_max=running_max, tau_n=tau)


@dataclass(frozen=True)
class LogExpFunctional:
    """(log a_{i,n}, log b_{i,n}) for one path and one split index i."""

    log_a: float
    log_b: float


def log_exp_functionals(path: WalkPath, i: int) -> LogExpFunctional:
    """Log-domain a_{i,n}, b_{i,n}; stable for |S_k| spreads of hundreds.

    log a = S_i - S_n; log b = log sum_{k=i}^{n-1} exp(S_i - S_k), accumulated
    with a running-max rescaled compensated sum, so b never overflows even on
    paths with very deep minima.  b >= 1 always because the k = i term is e^0.
    """
    n = path.n
    if not 0 <= i <= n - 1:
        raise ValueError(f"need 0 <= i <= n-1 = {n - 1}, got i={i}")
    ps = path.partial_sums
    acc = LogSumExpAccumulator()
    si = float(ps[i])
    for k in range(i, n):
        acc.add(si - float(ps[k]))
    return LogExpFunctional(log_a=si - float(ps[n]), log_b=acc.result())
