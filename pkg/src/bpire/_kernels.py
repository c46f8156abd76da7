"""Vectorized batch kernels for the Monte Carlo engine.

Each kernel is a frozen dataclass (hence picklable for worker pools) with

    stream_key(batch_index) -> tuple of ints identifying the rng stream,
    batch_means(stream, npaths) -> np.ndarray of per-batch means.

All kernels consume their stream through the same chunked simulation helper,
so two kernels with equal stream keys see byte-identical paths.  That is what
makes "same streams" comparisons (window profiles vs. the plain reversed
estimator) exact instead of statistical.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import gammaln

from ._engine import chunk_paths_for
from ._num import logsumexp_rows
from ._rng import (
    TAG_DUALITY,
    TAG_EVENT_DIRECT,
    TAG_EVENT_REVERSED,
    TAG_TAU_WINDOW_WALK,
    TAG_WALKSERIES,
)
from .env import IncrementLaw
from .gfalgebra import CONVENTIONS

WALK_KINDS = {
    "prob_min_nonneg": 1,
    "exp_neg_min": 2,
    "exp_pos_max": 3,
    "tilted_tau": 4,
    "guivarch": 5,
    "psi": 6,
    "t_of_x": 7,
}

# Guivarc'h-type functional registries.  Each g declares its power-growth
# exponent alpha (g(a) <= C a^alpha); each h declares decay beta and Holder
# exponent eps.  The declared exponents are checked against the law's
# exponential moments before sampling.
G_FUNCS: dict[str, tuple] = {"identity": (lambda y: y, 1.0)}
H_FUNCS: dict[str, tuple] = {"inv_one_plus": (lambda v: 1.0 / (1.0 + v), 1.0, 1.0)}


def register_g(name: str, func, alpha: float) -> None:
    if alpha <= 0:
        raise ValueError("alpha must be positive")
    G_FUNCS[name] = (func, float(alpha))


def register_h(name: str, func, beta: float, eps: float) -> None:
    if beta <= 0 or eps <= 0:
        raise ValueError("beta and eps must be positive")
    H_FUNCS[name] = (func, float(beta), float(eps))


def validate_guivarch_pair(law: IncrementLaw, g_tag: str, h_tag: str) -> None:
    if g_tag not in G_FUNCS:
        raise ValueError(f"unknown g tag {g_tag!r}")
    if h_tag not in H_FUNCS:
        raise ValueError(f"unknown h tag {h_tag!r}")
    alpha = G_FUNCS[g_tag][1]
    eps = H_FUNCS[h_tag][2]
    if not math.isfinite(law.mgf(alpha)):
        raise ValueError(f"law has no finite moment E[e^({alpha} X)] required by g={g_tag!r}")
    if not math.isfinite(law.mgf(-eps)):
        raise ValueError(f"law has no finite moment E[e^({-eps} X)] required by h={h_tag!r}")


def sim_S(law: IncrementLaw, stream: np.random.Generator, npaths: int, n: int) -> np.ndarray:
    """One chunk of paths as the (npaths, n+1) matrix of partial sums."""
    inc = law.sample(stream, (npaths, n))
    S = np.empty((npaths, n + 1))
    S[:, 0] = 0.0
    np.cumsum(inc, axis=1, out=S[:, 1:])
    return S


def iter_chunks(law, stream, npaths, n):
    cp = chunk_paths_for(n)
    done = 0
    while done < npaths:
        c = min(cp, npaths - done)
        yield sim_S(law, stream, c, n)
        done += c


def log_sparre_andersen(m: int) -> float:
    """log P(first m partial sums all >= 0) = log(C(2m, m) 4^-m).

    Distribution-free over continuous laws (exchangeable increments).
    """
    if m < 0:
        raise ValueError("need m >= 0")
    if m == 0:
        return 0.0
    return float(gammaln(2 * m + 1) - 2.0 * gammaln(m + 1) - m * math.log(4.0))


def rev_log_weight(S: np.ndarray, j: int) -> np.ndarray:
    """Row-wise log of the reversed-representation weight at split index j.

    The first denominator sum is over k < j, except at the edge j = n where
    it includes k = n (the i = 0 closed form reverses to that); see
    gfalgebra.reversed_rep_weight.
    """
    n = S.shape[1] - 1
    top = n + 1 if j == n else j
    return S[:, j] - logsumexp_rows(S[:, :top]) - logsumexp_rows(S[:, :n])


# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class EventProbKernel:
    """Mean of the exact clan probability H_{i,n} over environment paths."""

    law: IncrementLaw
    n: int
    i: int
    convention: str

    def stream_key(self, batch_index: int) -> tuple[int, ...]:
        return (TAG_EVENT_DIRECT, self.n, self.i, batch_index)

    def batch_means(self, stream, npaths: int) -> np.ndarray:
        n, i = self.n, self.i
        strict = self.convention == "strict"
        total = 0.0
        for S in iter_chunks(self.law, stream, npaths, n):
            neg = -S
            if i == 0:
                log_h = neg[:, n] - logsumexp_rows(neg) - logsumexp_rows(neg[:, 1:])
            elif strict:
                log_h = (
                    neg[:, i] + neg[:, n]
                    - logsumexp_rows(neg)
                    - logsumexp_rows(neg[:, i + 1:])
                )
            else:
                log_h = (
                    neg[:, i] + neg[:, n]
                    - logsumexp_rows(neg[:, i + 1:])
                    - logsumexp_rows(neg[:, 1:])
                )
            total += float(np.exp(log_h).sum())
        return np.array([total / npaths])


@dataclass(frozen=True)
class ReversedProbKernel:
    """Mean of the time-reversed weight; targets the clan probability at i = n - j."""

    law: IncrementLaw
    n: int
    j: int

    def stream_key(self, batch_index: int) -> tuple[int, ...]:
        return (TAG_EVENT_REVERSED, self.n, self.j, batch_index)

    def batch_means(self, stream, npaths: int) -> np.ndarray:
        total = 0.0
        for S in iter_chunks(self.law, stream, npaths, self.n):
            total += float(np.exp(rev_log_weight(S, self.j)).sum())
        return np.array([total / npaths])


@dataclass(frozen=True)
class WalkSeriesKernel:
    """One walk-functional scaling-series integrand at a single horizon n.

    Kinds and their per-path values:
      prob_min_nonneg  1{L_n >= -x}
      exp_neg_min      e^{-S_n} 1{L_n >= 0}
      exp_pos_max      e^{S_n} 1{M_n < 0}
      tilted_tau       e^{lam S_r} 1{tau(n) = r}
      guivarch         g(Y_n) h(Lam_n),  Y_n = e^{S_n}, Lam_n = sum_{k<=n} e^{S_k}
      psi              (1-s)^{-1} / ((1-s)^{-1} + sum_{k=1}^{n-1} e^{-S_k})
      t_of_x           e^{-S_n} / ((1 + T_n)(1 + x + T_n)), T_n = sum_{k=1}^{n} e^{-S_k}

    For continuous laws the tilted_tau estimator is Rao-Blackwellized: the
    indicator of {tau(n) = r} factorizes over the first r steps and the rest,
    and the second factor's probability P(L_{n-r} >= 0) is the exact
    distribution-free Sparre-Andersen value, so the kernel simulates only r
    steps and multiplies by that constant.  Same expectation, far lower
    variance.  Lattice laws (where the constant is not valid) use the direct
    full-path integrand.
    """

    law: IncrementLaw
    kind: str
    n: int
    lam: float = 1.0
    s: float = 0.0
    x: float = 0.0
    r: int = 0
    rao_blackwell: bool = False
    g_tag: str = "identity"
    h_tag: str = "inv_one_plus"

    def stream_key(self, batch_index: int) -> tuple[int, ...]:
        return (TAG_WALKSERIES, WALK_KINDS[self.kind], self.n, batch_index)

    def batch_means(self, stream, npaths: int) -> np.ndarray:
        n_sim = self.r if (self.kind == "tilted_tau" and self.rao_blackwell) else self.n
        total = 0.0
        for S in iter_chunks(self.law, stream, npaths, n_sim):
            total += self._chunk_sum(S)
        return np.array([total / npaths])

    def _chunk_sum(self, S: np.ndarray) -> float:
        kind = self.kind
        n = self.n
        if kind == "prob_min_nonneg":
            return float(np.count_nonzero(S.min(axis=1) >= -self.x))
        if kind == "exp_neg_min":
            ok = S.min(axis=1) >= 0.0
            return float(np.exp(-S[ok, n]).sum())
        if kind == "exp_pos_max":
            ok = S[:, 1:].max(axis=1) < 0.0
            return float(np.exp(S[ok, n]).sum())
        if kind == "tilted_tau":
            r = self.r
            if self.rao_blackwell:
                # S has r+1 columns here
                hit = np.argmin(S, axis=1) == r
                return float(np.exp(self.lam * S[hit, r]).sum()) * math.exp(
                    log_sparre_andersen(n - r)
                )
            hit = np.argmin(S, axis=1) == r
            return float(np.exp(self.lam * S[hit, r]).sum())
        if kind == "guivarch":
            g = G_FUNCS[self.g_tag][0]
            h = H_FUNCS[self.h_tag][0]
            ups = np.exp(S[:, n])
            lam_n = np.exp(S[:, 1:]).sum(axis=1)
            return float((g(ups) * h(lam_n)).sum())
        if kind == "psi":
            # 1/(1 + (1-s) sum e^{-S_k}), k = 1..n-1, in log domain
            lse = logsumexp_rows(-S[:, 1:n])
            vals = np.exp(-np.logaddexp(0.0, math.log1p(-self.s) + lse))
            return float(vals.sum())
        if kind == "t_of_x":
            lse = logsumexp_rows(-S[:, 1:])
            log_v = (
                -S[:, n]
                - np.logaddexp(0.0, lse)
                - np.logaddexp(math.log1p(self.x), lse)
            )
            return float(np.exp(log_v).sum())
        raise ValueError(f"unknown kind {kind!r}")


WINDOW_NAMES = ("K1", "K2", "union")
INTEGRANDS = ("walk", "clan")


def window_member(tau: np.ndarray, j: int, n: int, N: int, window: str) -> np.ndarray:
    in_k1 = (tau >= N) & (tau <= j - N)
    in_k2 = (tau >= j + N) & (tau <= n)
    if window == "K1":
        return in_k1
    if window == "K2":
        return in_k2
    return in_k1 | in_k2


def check_window(j: int, n: int, N: int) -> None:
    if not 1 <= j < n:
        raise ValueError(f"need 1 <= j < n, got j={j}, n={n}")
    if N < 1 or N > min(j / 2, n - j):
        raise ValueError(f"window width N={N} invalid: need 1 <= N <= min(j/2, n-j)")


@dataclass(frozen=True)
class TauWindowKernel:
    """Localization of the first extreme time, restricted to index windows.

    Statistics reported per batch: the unrestricted mean first, then the mean
    restricted to the requested window at each N in n_list, all on the same
    paths, so window contributions nest exactly (monotone in N pathwise).

    integrand "walk":  e^{-S_j} e^{S_{tau(j-1)}} e^{S_{tau(n)}} with tau the
        first minimum; windows filter tau(n).
    integrand "clan":  the reversed-representation weight; windows filter the
        first time of the running MAXIMUM (including index 0), which is the
        image of the first-minimum time under path reversal.  This kernel
        shares its stream key with ReversedProbKernel, so its unrestricted
        statistic reproduces that estimator bit-for-bit.
    """

    law: IncrementLaw
    n: int
    j: int
    n_list: tuple[int, ...]
    integrand: str = "clan"
    window: str = "union"

    def stream_key(self, batch_index: int) -> tuple[int, ...]:
        if self.integrand == "clan":
            return (TAG_EVENT_REVERSED, self.n, self.j, batch_index)
        return (TAG_TAU_WINDOW_WALK, self.n, self.j, batch_index)

    def batch_means(self, stream, npaths: int) -> np.ndarray:
        n, j = self.n, self.j
        sums = np.zeros(1 + len(self.n_list))
        for S in iter_chunks(self.law, stream, npaths, n):
            if self.integrand == "clan":
                vals = np.exp(rev_log_weight(S, j))
                t = np.argmax(S, axis=1)  # first maximum incl. index 0
            else:
                tau_jm1 = np.argmin(S[:, :j], axis=1)
                t = np.argmin(S, axis=1)
                rows = np.arange(S.shape[0])
                vals = np.exp(-S[:, j] + S[rows, tau_jm1] + S[rows, t])
            sums[0] += float(vals.sum())
            for k, N in enumerate(self.n_list):
                member = window_member(t, j, n, N, self.window)
                sums[1 + k] += float(vals[member].sum())
        return sums / npaths


DUALITY_STATS = {"tau_end": 1, "max_neg": 2, "tilt_full": 3, "tilt_head": 4, "min_tail": 5}


@dataclass(frozen=True)
class DualityKernel:
    """Direct (non-collapsed) integrands for the walk identity checks.

    n is the number of simulated steps for this statistic, which for
    tilt_head and min_tail is shorter than the identity's horizon.  Every
    stat keeps its own stream family, so the two sides of an identity are
    independent Monte Carlo programs.
    """

    law: IncrementLaw
    n: int
    stat: str
    lam: float = 1.0
    r: int = 0

    def stream_key(self, batch_index: int) -> tuple[int, ...]:
        return (TAG_DUALITY, DUALITY_STATS[self.stat], self.n, batch_index)

    def batch_means(self, stream, npaths: int) -> np.ndarray:
        total = 0.0
        for S in iter_chunks(self.law, stream, npaths, self.n):
            if self.stat == "tau_end":
                total += float(np.count_nonzero(np.argmin(S, axis=1) == self.n))
            elif self.stat == "max_neg":
                total += float(np.count_nonzero(S[:, 1:].max(axis=1) < 0.0))
            elif self.stat == "min_tail":
                total += float(np.count_nonzero(S.min(axis=1) >= 0.0))
            elif self.stat == "tilt_full":
                hit = np.argmin(S, axis=1) == self.r
                total += float(np.exp(self.lam * S[hit, self.r]).sum())
            elif self.stat == "tilt_head":
                hit = np.argmin(S, axis=1) == self.n
                total += float(np.exp(self.lam * S[hit, self.n]).sum())
            else:
                raise ValueError(f"unknown stat {self.stat!r}")
        return np.array([total / npaths])
