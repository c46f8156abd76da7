"""Exact generating-function algebra for geometric offspring.

Every per-generation offspring generating function is fractional-linear,

    F(s) = 1 - 1 / (A (1-s)^{-1} + B),

and the family is closed under composition, so the n-step iterate never has
to be built by functional iteration: coefficients compose by a monoid law.
Coefficients are carried as (log A, log B), which keeps compositions exact in
the regimes where A spans hundreds of e-folds.

The closed forms for the single-clan survival probabilities follow by
telescoping products of F_{k,n}(0) and are evaluated here entirely in the
log domain.  Two product conventions are shipped:

* ``paper_corollary`` leaves clan 0 unconstrained when i >= 1 (the extinction
  product starts at k = 1);
* ``strict`` requires every other clan dead, including clan 0.

Both coincide at i = 0.  They satisfy, exactly,

    H_strict(i) * (a_n + b_n) = H_paper_corollary(i) * (a_n + b_n - b_1)

for every i >= 1.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ._num import logsumexp_1d
from .walk import WalkPath

CONVENTIONS = ("paper_corollary", "strict")


@dataclass(frozen=True)
class FracLinCoef:
    """Log-domain coefficient pair (A, B) of F(s) = 1 - 1/(A(1-s)^{-1} + B).

    A > 0 always; B >= 0 with B = 0 encoded as log_B = -inf (the identity
    map F(s) = s).  Every coefficient built from increments has A + B >= 1,
    which keeps F(0) in [0, 1).
    """

    log_A: float
    log_B: float

    @classmethod
    def identity(cls) -> "FracLinCoef":
        return cls(0.0, -math.inf)

    @classmethod
    def from_increment(cls, x: float) -> "FracLinCoef":
        """One-step coefficient: (A, B) = (e^{-x}, 1)."""
        if not math.isfinite(x):
            raise ValueError(f"increment must be finite, got {x!r}")
        return cls(-float(x), 0.0)

    def compose(self, other: "FracLinCoef") -> "FracLinCoef":
        """self then other in generation order: (A_l A_r, B_l + A_l B_r)."""
        log_A = self.log_A + other.log_A
        log_B = float(np.logaddexp(self.log_B, self.log_A + other.log_B))
        return FracLinCoef(log_A, log_B)

    def evaluate(self, s: float) -> float:
        """F(s) for s in [0, 1), without leaving the log domain early."""
        if not 0.0 <= s < 1.0:
            raise ValueError(f"need 0 <= s < 1, got {s!r}")
        # F(s) = 1 - exp(-log(A/(1-s) + B))
        log_denom = float(np.logaddexp(self.log_A - math.log1p(-s), self.log_B))
        return -math.expm1(-log_denom)


def flin_from_increment(x: float) -> FracLinCoef:
    return FracLinCoef.from_increment(x)


def flin_compose(left: FracLinCoef, right: FracLinCoef) -> FracLinCoef:
    """Compose left then right (left acts on the earlier generations)."""
    return left.compose(right)


def flin_eval(coef: FracLinCoef, s: float) -> float:
    return coef.evaluate(s)


def flin_fold(increments) -> FracLinCoef:
    """Left-fold of one-step coefficients over a whole path."""
    acc = FracLinCoef.identity()
    for x in np.asarray(increments, dtype=np.float64):
        acc = acc.compose(FracLinCoef.from_increment(float(x)))
    return acc


@dataclass(frozen=True)
class ClanProbability:
    """log H_{i,n} under one of the two product conventions."""

    log_h: float
    convention: str

    @property
    def probability(self) -> float:
        return math.exp(self.log_h)


def _check_convention(convention: str) -> None:
    if convention not in CONVENTIONS:
        raise ValueError(f"convention must be one of {CONVENTIONS}, got {convention!r}")


def _log_tail_sum(neg_s: np.ndarray, k: int) -> float:
    """log d_k with d_k = a_n + b_n - b_k = sum_{j=k}^{n} e^{-S_j}.

    Evaluated as a log-sum-exp over the explicit contiguous index set
    {k, ..., n}; b_k is never subtracted from a_n + b_n, so the near-equal
    cancellation for k close to n costs no precision.
    """
    return logsumexp_1d(neg_s[k:])


def clan_prob(path: WalkPath, i: int, convention: str = "paper_corollary") -> ClanProbability:
    """Probability, given the environment, that exactly the (i, n)-clan survives.

    With d_k = sum_{j=k}^{n} e^{-S_j}:

    * paper_corollary: H = a_n / (d_0 d_1) at i = 0 and
      H = a_i a_n / (d_{i+1} d_1) for i >= 1 (clan 0 unconstrained).
    * strict: H = a_i a_n / (d_0 d_{i+1}) for i >= 1 (every other clan dead);
      identical to paper_corollary at i = 0.
    """
    _check_convention(convention)
    n = path.n
    if n < 1:
        raise ValueError("need n >= 1")
    if not 0 <= i <= n - 1:
        raise ValueError(f"need 0 <= i <= n-1 = {n - 1}, got i={i}")
    neg_s = -path.partial_sums
    log_an = float(neg_s[n])
    if i == 0:
        log_h = log_an + neg_s[0] - _log_tail_sum(neg_s, 0) - _log_tail_sum(neg_s, 1)
        return ClanProbability(log_h=log_h, convention=convention)
    log_num = float(neg_s[i]) + log_an
    if convention == "paper_corollary":
        log_h = log_num - _log_tail_sum(neg_s, i + 1) - _log_tail_sum(neg_s, 1)
    else:
        log_h = log_num - _log_tail_sum(neg_s, 0) - _log_tail_sum(neg_s, i + 1)
    return ClanProbability(log_h=log_h, convention=convention)


def no_survivor_prob(path: WalkPath) -> float:
    """Probability, given the environment, that no pre-immigration individual
    is alive at generation n: a_n / (a_n + b_n)."""
    if path.n < 1:
        raise ValueError("need n >= 1")
    neg_s = -path.partial_sums
    return math.exp(float(neg_s[path.n]) - _log_tail_sum(neg_s, 0))


def reversed_rep_weight(path: WalkPath, j: int) -> float:
    """Time-reversed estimator weight for the clan born n - j generations in.

        w_j = e^{S_j} / (sum_{k=0}^{j-1} e^{S_k}) * 1 / (sum_{k=0}^{n-1} e^{S_k})

    for 1 <= j <= n - 1.  At the edge j = n (clan index 0) the first sum runs
    through k = n: reversing S_k -> S_n - S_{n-k} in the i = 0 closed form
    (whose denominator carries d_0, not d_1) produces the endpoint term, and
    dropping it would overstate the i = 0 probability by a constant factor
    (1/16 instead of the exact 1/20 already at the flat path with n = 4).

    Pathwise the weight may exceed 1; only its expectation is a probability
    (it equals the paper_corollary clan probability at i = n - j in law).
    """
    n = path.n
    if not 1 <= j <= n:
        raise ValueError(f"need 1 <= j <= n = {n}, got j={j}")
    s = path.partial_sums
    top = n + 1 if j == n else j
    log_w = float(s[j]) - logsumexp_1d(s[:top]) - logsumexp_1d(s[:n])
    return math.exp(log_w)


def clan_prob_all(path: WalkPath, convention: str = "paper_corollary") -> np.ndarray:
    """Vector of clan_prob(path, i) for i = 0..n-1 in one pass.

    The tail sums log d_k are accumulated right-to-left with logaddexp, which
    matches the per-index log-sum-exp to rounding.
    """
    _check_convention(convention)
    n = path.n
    if n < 1:
        raise ValueError("need n >= 1")
    neg_s = -path.partial_sums
    log_d = np.logaddexp.accumulate(neg_s[::-1])[::-1]  # log_d[k] = log d_k
    log_an = float(neg_s[n])
    out = np.empty(n)
    out[0] = math.exp(log_an - log_d[0] - log_d[1])
    i = np.arange(1, n)
    if convention == "paper_corollary":
        out[1:] = np.exp(neg_s[i] + log_an - log_d[i + 1] - log_d[1])
    else:
        out[1:] = np.exp(neg_s[i] + log_an - log_d[0] - log_d[i + 1])
    return out
