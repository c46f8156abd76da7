"""Direct forward simulation of the immigration branching process.

Clans are tracked per immigrant: entry k of the state vector is the number
of generation-g descendants of the immigrant that entered at generation k
(the founder is index 0).  This simulator is the independent oracle for the
exact generating-function computation: frequencies measured here must match
the probabilities computed there on the same frozen environment.

Offspring are geometric with mean e^x, so a clan of size z reproduces as a
single negative-binomial draw (z-fold convolution of geometrics) instead of
z separate draws.  Sizes are capped at 2^62; a replicate whose clan would
plausibly exceed the cap is aborted and flagged, never truncated.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import expit

from .gfalgebra import CONVENTIONS
from .walk import WalkPath

CAP = 1 << 62
# abort before sampling once the conditional mean passes this; leaves room so
# the sampler itself (gamma-Poisson internals) cannot overflow afterwards
PREFLAG_MEAN = float(1 << 59)


class ClanOverflowError(RuntimeError):
    """A clan size exceeded (or was about to exceed) the integer cap."""


@dataclass(frozen=True)
class ClanVector:
    """Population state at one generation, split by immigrant of origin.

    sizes has generation+1 entries; the last is the immigrant that just
    arrived (always size 1 right after a step).
    """

    generation: int
    sizes: np.ndarray

    def __post_init__(self) -> None:
        arr = np.asarray(self.sizes, dtype=np.int64)
        object.__setattr__(self, "sizes", arr)
        if arr.shape != (self.generation + 1,):
            raise ValueError("sizes must have generation + 1 entries")
        if np.any(arr < 0):
            raise ValueError("clan sizes must be nonnegative")

    @classmethod
    def initial(cls) -> "ClanVector":
        return cls(0, np.ones(1, dtype=np.int64))

    @property
    def total(self) -> int:
        """Y_g: everyone alive, including the just-arrived immigrant."""
        return int(self.sizes.sum())

    @property
    def pre_immigrant(self) -> np.ndarray:
        """Y_g^- view: the generation's population before the new immigrant."""
        return self.sizes[: self.generation]


def step_generation(
    clans: ClanVector, x: float, stream: np.random.Generator
) -> ClanVector:
    """Reproduce every clan with mean e^x, then append the next immigrant."""
    old = clans.sizes
    new = np.zeros(old.size + 1, dtype=np.int64)
    nz = np.flatnonzero(old)
    if nz.size:
        z = old[nz]
        if z.astype(float).max() * math.exp(x) > PREFLAG_MEAN:
            raise ClanOverflowError(
                f"clan mean next size exceeds {PREFLAG_MEAN:.3g} at generation "
                f"{clans.generation + 1}"
            )
        q = expit(-x)  # geometric success parameter, mean (1-q)/q = e^x
        try:
            draws = stream.negative_binomial(z, q)
        except ValueError as exc:
            raise ClanOverflowError("offspring sampler overflow") from exc
        draws = np.asarray(draws, dtype=np.int64)
        if draws.max(initial=0) > CAP:
            raise ClanOverflowError("clan size exceeded the 2^62 cap")
        new[nz] = draws
    new[old.size] = 1
    return ClanVector(clans.generation + 1, new)


def simulate_population(path: WalkPath, stream: np.random.Generator) -> ClanVector:
    """Run the population through the whole environment path."""
    clans = ClanVector.initial()
    for x in path.increments:
        clans = step_generation(clans, float(x), stream)
    return clans


def simulate_population_block(
    path: WalkPath, reps: int, stream: np.random.Generator
) -> tuple[np.ndarray, np.ndarray]:
    """reps independent replicates on one frozen path, vectorized.

    Returns (sizes, valid): sizes is the (reps, n+1) int64 state at
    generation n, valid a boolean mask of replicates that never overflowed.
    Overflowed replicates are zeroed and excluded from later sampling.  The
    residual chance that the vectorized sampler itself overflows below the
    pre-flag threshold is ~e^{-16} per draw; that raises for the whole block.
    """
    if reps < 1:
        raise ValueError("need reps >= 1")
    n = path.n
    sizes = np.zeros((reps, n + 1), dtype=np.int64)
    sizes[:, 0] = 1
    valid = np.ones(reps, dtype=bool)
    for g in range(1, n + 1):
        x = float(path.increments[g - 1])
        q = expit(-x)
        growth = math.exp(x)
        act = sizes[:, :g]
        rows, cols = np.nonzero(act)
        vals = act[rows, cols]
        big = vals.astype(float) * growth > PREFLAG_MEAN
        if big.any():
            bad_rows = np.unique(rows[big])
            valid[bad_rows] = False
            sizes[bad_rows] = 0
            keep = ~np.isin(rows, bad_rows)
            rows, cols, vals = rows[keep], cols[keep], vals[keep]
        if vals.size:
            try:
                draws = np.asarray(stream.negative_binomial(vals, q), dtype=np.int64)
            except ValueError as exc:
                raise ClanOverflowError("offspring sampler overflow") from exc
            over = draws > CAP
            if over.any():
                bad_rows = np.unique(rows[over])
                valid[bad_rows] = False
                sizes[bad_rows] = 0
                keep = ~np.isin(rows, bad_rows)
                rows, cols, draws = rows[keep], cols[keep], draws[keep]
            act[...] = 0
            act[rows, cols] = draws
        else:
            act[...] = 0
        sizes[valid, g] = 1
    return sizes, valid


def _event_columns(sizes: np.ndarray, i: int, convention: str) -> np.ndarray:
    n = sizes.shape[1] - 1
    if not 0 <= i <= n - 1:
        raise ValueError(f"need 0 <= i <= n-1, got i={i}, n={n}")
    if convention not in CONVENTIONS:
        raise ValueError(f"unknown convention {convention!r}")
    pre = sizes[:, :n]
    alive_i = pre[:, i] > 0
    if convention == "strict" or i == 0:
        return alive_i & ((pre > 0).sum(axis=1) == 1)
    # survivors among clans 1..n-1 must be exactly clan i; clan 0 is free
    return alive_i & ((pre[:, 1:] > 0).sum(axis=1) == 1)


def event_indicator(clans: ClanVector, i: int, convention: str) -> bool:
    """Did immigrant i's clan end up as the whole (pre-immigrant) population?"""
    return bool(_event_columns(clans.sizes[None, :], i, convention)[0])


@dataclass(frozen=True)
class OracleTable:
    """Event frequencies for every clan index on one frozen environment."""

    freqs: np.ndarray
    ses: np.ndarray
    none_alive_freq: float
    none_alive_se: float
    multi_alive_freq: float
    multi_alive_se: float
    reps_valid: int
    reps_requested: int
    convention: str

    @property
    def overflow_fraction(self) -> float:
        return 1.0 - self.reps_valid / self.reps_requested


def _binom_se(freq: float, m: int) -> float:
    return math.sqrt(freq * (1.0 - freq) / m)


def oracle_event_frequencies(
    path: WalkPath, reps: int, stream: np.random.Generator, convention: str
) -> OracleTable:
    """One block of replicates, scored for every i at once.

    Frequencies across different i share replicates, so they are correlated,
    but each marginal (freq, se) is a valid binomial estimate.
    """
    sizes, valid = simulate_population_block(path, reps, stream)
    m = int(valid.sum())
    if m == 0:
        raise ClanOverflowError("every replicate overflowed")
    sz = sizes[valid]
    n = path.n
    freqs = np.empty(n)
    ses = np.empty(n)
    for i in range(n):
        k = int(_event_columns(sz, i, convention).sum())
        freqs[i] = k / m
        ses[i] = _binom_se(freqs[i], m)
    alive_counts = (sz[:, :n] > 0).sum(axis=1)
    f0 = float(np.count_nonzero(alive_counts == 0)) / m
    f2 = float(np.count_nonzero(alive_counts >= 2)) / m
    return OracleTable(
        freqs=freqs,
        ses=ses,
        none_alive_freq=f0,
        none_alive_se=_binom_se(f0, m),
        multi_alive_freq=f2,
        multi_alive_se=_binom_se(f2, m),
        reps_valid=m,
        reps_requested=reps,
        convention=convention,
    )


def oracle_event_frequency(
    path: WalkPath,
    i: int,
    convention: str,
    reps: int,
    stream: np.random.Generator,
) -> tuple[float, float]:
    """Fraction of replicates where clan i is the sole survivor, with its se."""
    if not 0 <= i <= path.n - 1:
        raise ValueError(f"need 0 <= i <= n-1, got i={i}, n={path.n}")
    table = oracle_event_frequencies(path, reps, stream, convention)
    return float(table.freqs[i]), float(table.ses[i])
