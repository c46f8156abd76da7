"""Scaling-regime estimators for the single-clan survival probabilities,
walk-functional series, first-extreme-time window contributions, identity
checks, and log-log slope fitting.

All Monte Carlo goes through a deterministic batch engine: batch b of an
estimator draws from a stream keyed by (master_seed, estimator tag, shape
parameters, b), batch means are reduced over a fixed binary tree, and
adaptive precision targeting only ever stops at batch-count doubling
boundaries.  Results are therefore bit-identical for a given seed no matter
how many workers run the batches.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ._engine import (
    DEFAULT_BUDGET,
    EstimatorResult,
    VectorResult,
    run_kernel,
    scalar_result,
)
from ._kernels import (
    DualityKernel,
    EventProbKernel,
    ReversedProbKernel,
    TauWindowKernel,
    WalkSeriesKernel,
    WALK_KINDS,
    check_window,
    log_sparre_andersen,
    validate_guivarch_pair,
)
from ._rng import TAG_DECOMPOSITION, make_stream
from .env import IncrementLaw
from .gfalgebra import CONVENTIONS, clan_prob_all, no_survivor_prob
from .popsim import oracle_event_frequencies
from .walk import simulate_path

__all__ = [
    "EstimatorResult",
    "FixedI",
    "FixedGap",
    "Proportional",
    "ScalingSeries",
    "SeriesRow",
    "SlopeFit",
    "estimate_event_prob",
    "estimate_event_prob_reversed",
    "scaling_sweep",
    "fit_log_slope",
    "walk_functional_series",
    "tau_window_contribution",
    "tau_window_profile",
    "duality_check",
    "decomposition_check",
    "sparre_andersen_prob",
]


# --------------------------------------------------------------------------
# regimes


@dataclass(frozen=True)
class FixedI:
    """Clan index held constant while n grows (survival prob ~ n^{-3/2})."""

    i: int

    def __post_init__(self) -> None:
        if self.i < 0:
            raise ValueError("need i >= 0")

    def resolve(self, n: int) -> int:
        if self.i > n - 1:
            raise ValueError(f"fixed_i({self.i}) needs n >= {self.i + 1}, got {n}")
        return self.i

    @property
    def label(self) -> str:
        return f"fixed_i({self.i})"


@dataclass(frozen=True)
class FixedGap:
    """Clan a fixed number of generations before the end (prob ~ n^{-1/2})."""

    gap: int

    def __post_init__(self) -> None:
        if self.gap < 1:
            raise ValueError("need gap >= 1")

    def resolve(self, n: int) -> int:
        if self.gap > n - 1:
            raise ValueError(f"fixed_gap({self.gap}) needs n >= {self.gap + 1}, got {n}")
        return n - self.gap

    @property
    def label(self) -> str:
        return f"fixed_gap({self.gap})"


@dataclass(frozen=True)
class Proportional:
    """Clan index i = floor(rho n) (prob ~ n^{-2} at fixed rho)."""

    rho: float

    def __post_init__(self) -> None:
        if not 0.0 < self.rho < 1.0:
            raise ValueError("need 0 < rho < 1")

    def resolve(self, n: int) -> int:
        i = int(math.floor(self.rho * n))
        if not 0 <= i <= n - 1:
            raise ValueError(f"proportional({self.rho}) invalid at n={n}")
        return i

    @property
    def label(self) -> str:
        return f"proportional({self.rho:g})"


Regime = FixedI | FixedGap | Proportional


# --------------------------------------------------------------------------
# series and fits


@dataclass(frozen=True)
class SeriesRow:
    n: int
    i: int
    estimate: float
    stderr: float
    nsamples: int
    budget_exhausted: bool = False


@dataclass(frozen=True)
class ScalingSeries:
    """Estimates of one quantity along an increasing n grid."""

    label: str
    rows: tuple[SeriesRow, ...]
    master_seed: int

    def __post_init__(self) -> None:
        ns = [r.n for r in self.rows]
        if any(b <= a for a, b in zip(ns, ns[1:])):
            raise ValueError("n must be strictly increasing across rows")

    def to_csv(self) -> str:
        lines = ["n,i,estimate,stderr,nsamples,seed"]
        for r in self.rows:
            lines.append(
                f"{r.n},{r.i},{r.estimate!r},{r.stderr!r},{r.nsamples},{self.master_seed}"
            )
        return "\n".join(lines) + "\n"


@dataclass(frozen=True)
class SlopeFit:
    """Weighted least squares of log(estimate) on log(n)."""

    slope: float
    intercept: float
    ci95: float
    r2: float
    points: int

    def to_json_dict(self) -> dict:
        return {
            "slope": self.slope,
            "intercept": self.intercept,
            "ci95": self.ci95,
            "r2": self.r2,
            "points": self.points,
        }


def fit_log_slope(series: ScalingSeries) -> SlopeFit:
    """Fit log(estimate) = slope log(n) + intercept.

    Weights are 1/(stderr/estimate)^2, the delta-method variance of the log;
    exact rows (stderr 0) get a tiny floor so they behave as equal weights.
    """
    rows = series.rows
    if len(rows) < 3:
        raise ValueError("need at least 3 rows to fit a slope")
    if any(r.estimate <= 0 for r in rows):
        raise ValueError("all estimates must be positive for a log-log fit")
    x = np.log([r.n for r in rows])
    y = np.log([r.estimate for r in rows])
    rel = np.array([max(r.stderr / r.estimate, 1e-12) for r in rows])
    w = 1.0 / (rel * rel)
    wsum = w.sum()
    xbar = (w * x).sum() / wsum
    ybar = (w * y).sum() / wsum
    sxx = (w * (x - xbar) ** 2).sum()
    slope = (w * (x - xbar) * (y - ybar)).sum() / sxx
    intercept = ybar - slope * xbar
    resid = y - slope * x - intercept
    ss_res = (w * resid * resid).sum()
    ss_tot = (w * (y - ybar) ** 2).sum()
    r2 = 1.0 if ss_tot <= 0 else float(np.clip(1.0 - ss_res / ss_tot, 0.0, 1.0))
    ci95 = 1.96 / math.sqrt(sxx)
    return SlopeFit(
        slope=float(slope),
        intercept=float(intercept),
        ci95=ci95,
        r2=r2,
        points=len(rows),
    )


# --------------------------------------------------------------------------
# clan-probability estimators


def estimate_event_prob(
    law: IncrementLaw,
    regime: Regime,
    n: int,
    *,
    convention: str = "paper_corollary",
    master_seed: int,
    nsamples: int | None = None,
    rel_se: float | None = None,
    budget: int = DEFAULT_BUDGET,
    workers: int = 1,
) -> EstimatorResult:
    """Mean over environments of the exact conditional clan probability.

    This collapses the branching randomness analytically, so each sampled
    path contributes the number H_{i,n} in [0, 1] rather than a 0/1 outcome
    (never worse in variance than the population oracle).
    """
    if convention not in CONVENTIONS:
        raise ValueError(f"unknown convention {convention!r}")
    if n < 1:
        raise ValueError("need n >= 1")
    i = regime.resolve(n)
    kernel = EventProbKernel(law=law, n=n, i=i, convention=convention)
    return scalar_result(
        run_kernel(
            kernel,
            master_seed,
            nsamples=nsamples,
            target_rel_se=rel_se,
            budget=budget,
            workers=workers,
        )
    )


def estimate_event_prob_reversed(
    law: IncrementLaw,
    regime: Regime,
    n: int,
    *,
    master_seed: int,
    nsamples: int | None = None,
    rel_se: float | None = None,
    budget: int = DEFAULT_BUDGET,
    workers: int = 1,
) -> EstimatorResult:
    """Same target as estimate_event_prob, via the time-reversed weight at
    j = n - i; an independent Monte Carlo program (its own stream family)."""
    if n < 1:
        raise ValueError("need n >= 1")
    j = n - regime.resolve(n)
    if j < 1:
        raise ValueError("reversed estimator needs i <= n - 1")
    kernel = ReversedProbKernel(law=law, n=n, j=j)
    return scalar_result(
        run_kernel(
            kernel,
            master_seed,
            nsamples=nsamples,
            target_rel_se=rel_se,
            budget=budget,
            workers=workers,
        )
    )


def _check_n_grid(n_grid, minimum: int) -> list[int]:
    grid = [int(v) for v in n_grid]
    if not grid:
        raise ValueError("empty n grid")
    if any(b <= a for a, b in zip(grid, grid[1:])):
        raise ValueError("n grid must be strictly increasing")
    if grid[0] < minimum:
        raise ValueError(f"each n must be >= {minimum}")
    return grid


def scaling_sweep(
    law: IncrementLaw,
    regime: Regime,
    n_grid,
    *,
    convention: str = "paper_corollary",
    master_seed: int,
    nsamples: int | None = None,
    rel_se: float | None = None,
    budget: int = DEFAULT_BUDGET,
    workers: int = 1,
    estimator: str = "direct",
) -> ScalingSeries:
    """One estimate per n on a common master seed (per-n sub-streams)."""
    grid = _check_n_grid(n_grid, 2)
    if estimator not in ("direct", "reversed"):
        raise ValueError(f"unknown estimator {estimator!r}")
    for n in grid:
        regime.resolve(n)
    rows = []
    for n in grid:
        if estimator == "direct":
            res = estimate_event_prob(
                law, regime, n,
                convention=convention, master_seed=master_seed,
                nsamples=nsamples, rel_se=rel_se, budget=budget, workers=workers,
            )
        else:
            res = estimate_event_prob_reversed(
                law, regime, n,
                master_seed=master_seed,
                nsamples=nsamples, rel_se=rel_se, budget=budget, workers=workers,
            )
        rows.append(
            SeriesRow(
                n=n,
                i=regime.resolve(n),
                estimate=res.mean,
                stderr=res.stderr,
                nsamples=res.nsamples,
                budget_exhausted=res.budget_exhausted,
            )
        )
    return ScalingSeries(label=regime.label, rows=tuple(rows), master_seed=master_seed)


# --------------------------------------------------------------------------
# walk-functional series

_WALK_PARAM_KEYS = {
    "prob_min_nonneg": {"x"},
    "exp_neg_min": set(),
    "exp_pos_max": set(),
    "tilted_tau": {"lam", "r_frac"},
    "guivarch": {"g", "h"},
    "psi": {"s"},
    "t_of_x": {"x"},
}


def _resolve_r(n: int, r_frac: float) -> int:
    r = int(math.floor(r_frac * n))
    return min(max(r, 1), n)


def walk_functional_series(
    law: IncrementLaw,
    kind: str,
    n_grid,
    reps: int,
    params: dict | None = None,
    *,
    master_seed: int,
    workers: int = 1,
) -> ScalingSeries:
    """Fixed-sample-size series of one walk functional along an n grid.

    The i column of the result holds the resolved tilt epoch r for
    tilted_tau and -1 for every other kind (no clan index is involved).
    """
    if kind not in WALK_KINDS:
        raise ValueError(f"unknown kind {kind!r}")
    if reps < 1:
        raise ValueError("need reps >= 1")
    params = dict(params or {})
    extra = set(params) - _WALK_PARAM_KEYS[kind]
    if extra:
        raise ValueError(f"unknown parameter {sorted(extra)[0]!r} for kind {kind!r}")
    grid = _check_n_grid(n_grid, 1)

    lam = float(params.get("lam", 1.0))
    s = float(params.get("s", 0.0))
    x = float(params.get("x", 0.0))
    r_frac = float(params.get("r_frac", 0.5))
    g_tag = params.get("g", "identity")
    h_tag = params.get("h", "inv_one_plus")
    if kind == "tilted_tau":
        if lam <= 0:
            raise ValueError("tilted kinds need lam > 0")
        if not 0.0 < r_frac <= 1.0:
            raise ValueError("need 0 < r_frac <= 1")
    if kind == "psi" and not 0.0 <= s < 1.0:
        raise ValueError("need 0 <= s < 1")
    if kind in ("prob_min_nonneg", "t_of_x") and x < 0:
        raise ValueError("need x >= 0")
    if kind == "guivarch":
        validate_guivarch_pair(law, g_tag, h_tag)

    rows = []
    for n in grid:
        r = _resolve_r(n, r_frac) if kind == "tilted_tau" else 0
        kernel = WalkSeriesKernel(
            law=law,
            kind=kind,
            n=n,
            lam=lam,
            s=s,
            x=x,
            r=r,
            rao_blackwell=kind == "tilted_tau" and law.is_continuous,
            g_tag=g_tag,
            h_tag=h_tag,
        )
        res = scalar_result(
            run_kernel(kernel, master_seed, nsamples=reps, workers=workers)
        )
        rows.append(
            SeriesRow(
                n=n,
                i=r if kind == "tilted_tau" else -1,
                estimate=res.mean,
                stderr=res.stderr,
                nsamples=res.nsamples,
            )
        )
    return ScalingSeries(label=f"walk:{kind}", rows=tuple(rows), master_seed=master_seed)


def sparre_andersen_prob(m: int) -> float:
    """Exact P(L_m >= 0) for any continuous increment law: C(2m, m) 4^-m."""
    return math.exp(log_sparre_andersen(m))


# --------------------------------------------------------------------------
# first-extreme-time windows


def _vector_component(vr: VectorResult, k: int, master_seed: int) -> EstimatorResult:
    return EstimatorResult(
        mean=float(vr.means[k]),
        stderr=float(vr.stderrs[k]),
        nsamples=vr.nsamples,
        master_seed=master_seed,
        batches=vr.batches,
        budget_exhausted=vr.budget_exhausted,
    )


def tau_window_profile(
    law: IncrementLaw,
    j: int,
    n: int,
    n_list,
    reps: int,
    *,
    master_seed: int,
    integrand: str = "clan",
    window: str = "union",
    workers: int = 1,
) -> tuple[EstimatorResult, dict[int, EstimatorResult]]:
    """Window contributions at several widths N on one set of paths.

    Returns (full, per_N) where full is the unrestricted mean (indicator
    identically one).  Because every width is evaluated on the same paths,
    per_N[N2].mean <= per_N[N1].mean holds exactly whenever N2 >= N1, and
    full equals the plain reversed estimator bit-for-bit when integrand is
    "clan" (shared stream family and identical arithmetic).
    """
    if integrand not in ("walk", "clan"):
        raise ValueError(f"unknown integrand {integrand!r}")
    if window not in ("K1", "K2", "union"):
        raise ValueError(f"unknown window {window!r}")
    widths = [int(N) for N in n_list]
    for N in widths:
        check_window(j, n, N)
    kernel = TauWindowKernel(
        law=law, n=n, j=j, n_list=tuple(widths), integrand=integrand, window=window
    )
    vr = run_kernel(kernel, master_seed, nsamples=reps, workers=workers)
    full = _vector_component(vr, 0, master_seed)
    per_n = {N: _vector_component(vr, 1 + k, master_seed) for k, N in enumerate(widths)}
    return full, per_n


def tau_window_contribution(
    law: IncrementLaw,
    j: int,
    n: int,
    N: int,
    reps: int,
    *,
    master_seed: int,
    integrand: str = "clan",
    window: str = "union",
    workers: int = 1,
) -> EstimatorResult:
    """Mean of the integrand restricted to the first-extreme-time window.

    window "full" ignores N and returns the unrestricted mean.
    """
    if window == "full":
        full, _ = tau_window_profile(
            law, j, n, (), reps,
            master_seed=master_seed, integrand=integrand, workers=workers,
        )
        return full
    _, per_n = tau_window_profile(
        law, j, n, (N,), reps,
        master_seed=master_seed, integrand=integrand, window=window, workers=workers,
    )
    return per_n[N]


# --------------------------------------------------------------------------
# identity checks


@dataclass(frozen=True)
class DualityReport:
    """Two-sided Monte Carlo check of the first-minimum duality and the
    tilted factorization over the minimum's position."""

    n: int
    p_tau: float
    p_tau_se: float
    p_max: float
    p_max_se: float
    z: float
    lam: float
    r: int
    fact_lhs: float
    fact_lhs_se: float
    fact_rhs: float
    fact_rhs_se: float
    fact_z: float


def _zscore(diff: float, se: float) -> float:
    if se == 0.0:
        return 0.0 if diff == 0.0 else math.inf
    return diff / se


def duality_check(
    law: IncrementLaw,
    n: int,
    reps: int,
    *,
    master_seed: int,
    lam: float = 1.0,
    workers: int = 1,
) -> DualityReport:
    """P(tau(n) = n) vs P(M_n < 0) on independent streams, plus the
    factorization E[e^{lam S_r}; tau(n)=r] = E[e^{lam S_r}; tau(r)=r] P(L_{n-r} >= 0).

    Every factor here is estimated by its direct integrand (no collapsing),
    so the check exercises the raw identities.
    """
    if not law.is_continuous:
        raise ValueError("duality check needs a continuous law (ties break tau)")
    if n < 1 or reps < 1:
        raise ValueError("need n >= 1 and reps >= 1")
    if lam <= 0:
        raise ValueError("need lam > 0")

    def run(stat: str, steps: int, r: int = 0) -> EstimatorResult:
        kernel = DualityKernel(law=law, n=steps, stat=stat, lam=lam, r=r)
        return scalar_result(
            run_kernel(kernel, master_seed, nsamples=reps, workers=workers)
        )

    res_tau = run("tau_end", n)
    res_max = run("max_neg", n)
    z = _zscore(res_tau.mean - res_max.mean, math.hypot(res_tau.stderr, res_max.stderr))

    r = max(1, n // 2)
    res_full = run("tilt_full", n, r=r)
    res_head = run("tilt_head", r)
    if n - r >= 1:
        res_tail = run("min_tail", n - r)
        tail_mean, tail_se = res_tail.mean, res_tail.stderr
    else:
        tail_mean, tail_se = 1.0, 0.0
    rhs = res_head.mean * tail_mean
    rhs_se = math.hypot(res_head.stderr * tail_mean, res_head.mean * tail_se)
    fact_z = _zscore(res_full.mean - rhs, math.hypot(res_full.stderr, rhs_se))
    return DualityReport(
        n=n,
        p_tau=res_tau.mean,
        p_tau_se=res_tau.stderr,
        p_max=res_max.mean,
        p_max_se=res_max.stderr,
        z=z,
        lam=lam,
        r=r,
        fact_lhs=res_full.mean,
        fact_lhs_se=res_full.stderr,
        fact_rhs=rhs,
        fact_rhs_se=rhs_se,
        fact_z=fact_z,
    )


@dataclass(frozen=True)
class DecompositionReport:
    """Per-environment closure of the survivor partition.

    For each sampled environment, the exact one-clan probabilities (strict
    convention) plus the exact no-survivor probability plus the simulated
    frequency of two-or-more surviving clans must account for all the mass.
    """

    n: int
    env_samples: int
    branch_reps: int
    exact_one_clan: np.ndarray
    exact_no_survivor: np.ndarray
    multi_freq: np.ndarray
    multi_se: np.ndarray
    deviations: np.ndarray
    zscores: np.ndarray

    @property
    def max_abs_z(self) -> float:
        return float(np.max(np.abs(self.zscores)))

    def fraction_within(self, nse: float = 4.0) -> float:
        return float(np.mean(np.abs(self.zscores) <= nse))


def decomposition_check(
    law: IncrementLaw,
    n: int,
    env_samples: int,
    branch_reps: int,
    *,
    master_seed: int,
) -> DecompositionReport:
    """Sample environments, then close the partition identity on each."""
    if n > 16:
        raise ValueError("decomposition check is oracle-scale only (n <= 16)")
    if n < 1 or env_samples < 1 or branch_reps < 1:
        raise ValueError("need n, env_samples, branch_reps >= 1")
    one_clan = np.empty(env_samples)
    no_surv = np.empty(env_samples)
    freq2 = np.empty(env_samples)
    se2 = np.empty(env_samples)
    for e in range(env_samples):
        env_stream = make_stream(master_seed, TAG_DECOMPOSITION, 0, e)
        path = simulate_path(law, n, env_stream)
        one_clan[e] = clan_prob_all(path, "strict").sum()
        no_surv[e] = no_survivor_prob(path)
        branch_stream = make_stream(master_seed, TAG_DECOMPOSITION, 1, e)
        table = oracle_event_frequencies(path, branch_reps, branch_stream, "strict")
        freq2[e] = table.multi_alive_freq
        se2[e] = table.multi_alive_se
    deviations = one_clan + no_surv + freq2 - 1.0
    floor = 1.0 / branch_reps
    zscores = deviations / np.maximum(se2, floor)
    return DecompositionReport(
        n=n,
        env_samples=env_samples,
        branch_reps=branch_reps,
        exact_one_clan=one_clan,
        exact_no_survivor=no_surv,
        multi_freq=freq2,
        multi_se=se2,
        deviations=deviations,
        zscores=zscores,
    )
