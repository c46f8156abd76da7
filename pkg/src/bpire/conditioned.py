"""Renewal functions of the walk killed at its first sign change, and the
expectations taken under the walk conditioned to stay positive or negative.

U(x) (x >= 0) is one plus the expected number of epochs the walk spends in
[-x, 0) before it first reaches [0, inf); V(x) (x <= 0) mirrors it on the
other side.  Both are estimated by literally counting those epochs on
simulated excursions, truncated at a cap whose effect is reported as the
fraction of truncated paths.  U(0) = V(0) = 1 holds exactly by construction
and the estimates are monotone in |x| pathwise, not just in expectation.

The positive-conditioned expectations are computed by Doob reweighting with
the estimated U, never by sampling from the conditioned law directly.
"""
from __future__ import annotations

import io
import math
from dataclasses import dataclass

import numpy as np

from .env import IncrementLaw

FUNCTIONALS = ("one", "exp_neg_end", "inv_one_plus_sum_exp_neg")

# target elements per simulation chunk inside the excursion loop
_CHUNK_ENTRIES = 1 << 22
_MAX_STEP_CHUNK = 1 << 16


class NoSampleError(RuntimeError):
    """A rejection estimator accepted zero paths."""


@dataclass(frozen=True)
class RenewalTable:
    """Estimated renewal function on a grid, with its truncation bookkeeping.

    side is "U" (grid in [0, inf)) or "V" (grid in (-inf, 0]).
    """

    side: str
    grid: np.ndarray
    values: np.ndarray
    stderr: np.ndarray
    cap: int
    truncated_fraction: float
    paths: int
    seed: int | None = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "grid", np.asarray(self.grid, dtype=float))
        object.__setattr__(self, "values", np.asarray(self.values, dtype=float))
        object.__setattr__(self, "stderr", np.asarray(self.stderr, dtype=float))
        if self.side not in ("U", "V"):
            raise ValueError(f"side must be 'U' or 'V', got {self.side!r}")
        if self.grid.size == 0:
            raise ValueError("empty grid")

    def evaluate(self, x) -> np.ndarray | float:
        """Piecewise-linear interpolation, linear continuation past the ends."""
        g, v = self.grid, self.values
        xs = np.asarray(x, dtype=float)
        y = np.interp(xs, g, v)
        if g.size >= 2:
            lo = xs < g[0]
            if np.any(lo):
                m = (v[1] - v[0]) / (g[1] - g[0])
                y = np.where(lo, v[0] + m * (xs - g[0]), y)
            hi = xs > g[-1]
            if np.any(hi):
                m = (v[-1] - v[-2]) / (g[-1] - g[-2])
                y = np.where(hi, v[-1] + m * (xs - g[-1]), y)
        if np.isscalar(x) or np.asarray(x).ndim == 0:
            return float(y)
        return y

    def to_csv(self) -> str:
        out = io.StringIO()
        out.write(f"# cap={self.cap}\n")
        out.write(f"# paths={self.paths}\n")
        out.write(f"# seed={self.seed if self.seed is not None else 'none'}\n")
        out.write("x,value,stderr\n")
        for x, v, s in zip(self.grid, self.values, self.stderr):
            out.write(f"{float(x)!r},{float(v)!r},{float(s)!r}\n")
        return out.getvalue()


def _excursion_table(
    law: IncrementLaw,
    x_grid: np.ndarray,
    paths: int,
    cap: int,
    stream: np.random.Generator,
    side: str,
    seed: int | None,
) -> RenewalTable:
    grid = np.asarray(x_grid, dtype=float)
    if grid.size == 0:
        raise ValueError("empty grid")
    if np.any(np.diff(grid) <= 0):
        raise ValueError("grid must be strictly increasing")
    if side == "U" and grid[0] < 0:
        raise ValueError("U grid must lie in [0, inf)")
    if side == "V" and grid[-1] > 0:
        raise ValueError("V grid must lie in (-inf, 0]")
    if paths < 1 or cap < 1:
        raise ValueError("need paths >= 1 and cap >= 1")

    G = grid.size
    counts = np.zeros((paths, G), dtype=np.int64)
    s_cur = np.zeros(paths)
    active = np.arange(paths)
    steps_done = 0
    while active.size and steps_done < cap:
        step = max(64, _CHUNK_ENTRIES // active.size)
        step = min(step, _MAX_STEP_CHUNK, cap - steps_done)
        inc = law.sample(stream, (active.size, step))
        S = np.cumsum(inc, axis=1)
        S += s_cur[active, None]
        stop = S >= 0.0 if side == "U" else S < 0.0
        hit = stop.any(axis=1)
        first = np.argmax(stop, axis=1)
        limit = np.where(hit, first, step)
        epoch_ok = np.arange(step)[None, :] < limit[:, None]
        for k in range(G):
            cond = S >= -grid[k] if side == "U" else S < -grid[k]
            counts[active, k] += np.count_nonzero(epoch_ok & cond, axis=1)
        s_cur[active] = S[:, -1]
        active = active[~hit]
        steps_done += step

    truncated = active.size / paths
    mean_counts = counts.mean(axis=0)
    sd = counts.std(axis=0, ddof=1) if paths > 1 else np.zeros(G)
    return RenewalTable(
        side=side,
        grid=grid,
        values=1.0 + mean_counts,
        stderr=sd / math.sqrt(paths),
        cap=cap,
        truncated_fraction=truncated,
        paths=paths,
        seed=seed,
    )


def estimate_U(
    law: IncrementLaw,
    x_grid,
    paths: int,
    cap: int,
    stream: np.random.Generator,
    seed: int | None = None,
) -> RenewalTable:
    """Visit-count estimate of U on x_grid (subset of [0, inf))."""
    return _excursion_table(law, x_grid, paths, cap, stream, "U", seed)


def estimate_V(
    law: IncrementLaw,
    x_grid,
    paths: int,
    cap: int,
    stream: np.random.Generator,
    seed: int | None = None,
) -> RenewalTable:
    """Visit-count estimate of V on x_grid (subset of (-inf, 0])."""
    return _excursion_table(law, x_grid, paths, cap, stream, "V", seed)


def harmonicity_residual(
    law: IncrementLaw,
    table: RenewalTable,
    x: float,
    reps: int,
    stream: np.random.Generator,
) -> tuple[float, float]:
    """Mean of U(x+X) 1{x+X >= 0} minus U(x) (V mirror for side 'V').

    Zero in expectation when the table is exact; the returned se covers only
    the drawing of X, not the table's own error.
    """
    if reps < 1:
        raise ValueError("need reps >= 1")
    if table.side == "U":
        if x < 0:
            raise ValueError("U residual needs x >= 0")
    elif x > 0:
        raise ValueError("V residual needs x <= 0")
    draws = np.asarray(law.sample(stream, reps), dtype=float) + x
    keep = draws >= 0.0 if table.side == "U" else draws < 0.0
    vals = np.where(keep, table.evaluate(draws), 0.0)
    residual = float(vals.mean()) - table.evaluate(x)
    se = float(vals.std(ddof=1)) / math.sqrt(reps) if reps > 1 else 0.0
    return residual, se


def _eval_functional(functional, S: np.ndarray) -> np.ndarray:
    """Apply a registered tag or a callable to paths given as partial sums."""
    if callable(functional):
        return np.asarray(functional(S), dtype=float)
    n = S.shape[1] - 1
    if functional == "one":
        return np.ones(S.shape[0])
    if functional == "exp_neg_end":
        return np.exp(-S[:, n])
    if functional == "inv_one_plus_sum_exp_neg":
        if n == 0:
            return np.ones(S.shape[0])
        return 1.0 / (1.0 + np.exp(-S[:, 1:]).sum(axis=1))
    raise ValueError(f"unknown functional tag {functional!r}")


def plus_measure_expectation(
    law: IncrementLaw,
    functional,
    n: int,
    x: float,
    reps: int,
    table_U: RenewalTable,
    stream: np.random.Generator,
) -> tuple[float, float]:
    """Expectation of the functional under the walk from x conditioned to
    stay nonnegative, by U-weighting of unconditioned paths.

    Per path started at x (simulated as x + S): weight
    U(x + S_n) 1{min(x + S) >= 0} / U(x).
    """
    if x < 0:
        raise ValueError("need x >= 0")
    if n < 0:
        raise ValueError("need n >= 0")
    if reps < 1:
        raise ValueError("need reps >= 1")
    if table_U.side != "U":
        raise ValueError("need a U-side table")
    if n == 0:
        S = np.full((1, 1), x)
        return float(_eval_functional(functional, S)[0]), 0.0
    u_x = table_U.evaluate(x)
    total = 0.0
    total_sq = 0.0
    done = 0
    chunk = max(1, min(reps, _CHUNK_ENTRIES // (n + 1)))
    while done < reps:
        c = min(chunk, reps - done)
        inc = law.sample(stream, (c, n))
        S = np.empty((c, n + 1))
        S[:, 0] = x
        np.cumsum(inc, axis=1, out=S[:, 1:])
        S[:, 1:] += x
        w = np.where(S.min(axis=1) >= 0.0, table_U.evaluate(S[:, n]), 0.0) / u_x
        vals = _eval_functional(functional, S) * w
        total += float(vals.sum())
        total_sq += float((vals * vals).sum())
        done += c
    mean = total / reps
    var = max(total_sq / reps - mean * mean, 0.0)
    se = math.sqrt(var / reps)
    return mean, se


CONDITIONS = ("min_ge_neg", "max_lt_neg", "tau_eq")


def conditional_expectation(
    law: IncrementLaw,
    functional,
    condition: tuple,
    n: int,
    reps: int,
    stream: np.random.Generator,
) -> tuple[float, float, float]:
    """Rejection estimate of E[functional | condition] over reps raw paths.

    condition is ("min_ge_neg", x) for {L_n >= -x}, ("max_lt_neg", x) for
    {M_n < -x}, or ("tau_eq", r) for {tau(n) = r}; the last is refused for
    lattice laws, where ties make the first-minimum index non-generic.
    """
    if n < 1 or reps < 1:
        raise ValueError("need n >= 1 and reps >= 1")
    kind, param = condition
    if kind not in CONDITIONS:
        raise ValueError(f"unknown condition kind {kind!r}")
    if kind in ("min_ge_neg", "max_lt_neg") and param < 0:
        raise ValueError("need x >= 0")
    if kind == "tau_eq":
        if not 0 <= param <= n:
            raise ValueError("need 0 <= r <= n")
        if law.is_lattice:
            raise ValueError("tau_eq conditioning is not available for lattice laws")
    total = 0.0
    total_sq = 0.0
    accepted = 0
    done = 0
    chunk = max(1, min(reps, _CHUNK_ENTRIES // (n + 1)))
    while done < reps:
        c = min(chunk, reps - done)
        inc = law.sample(stream, (c, n))
        S = np.empty((c, n + 1))
        S[:, 0] = 0.0
        np.cumsum(inc, axis=1, out=S[:, 1:])
        if kind == "min_ge_neg":
            ok = S.min(axis=1) >= -param
        elif kind == "max_lt_neg":
            ok = S[:, 1:].max(axis=1) < -param
        else:
            ok = np.argmin(S, axis=1) == param
        if ok.any():
            vals = _eval_functional(functional, S[ok])
            total += float(vals.sum())
            total_sq += float((vals * vals).sum())
            accepted += int(ok.sum())
        done += c
    if accepted == 0:
        raise NoSampleError(
            f"condition {condition!r} accepted none of {reps} paths at n={n}"
        )
    mean = total / accepted
    var = max(total_sq / accepted - mean * mean, 0.0)
    se = math.sqrt(var / accepted) if accepted > 1 else 0.0
    return mean, se, accepted / reps


@dataclass(frozen=True)
class TiltedMeasureSpec:
    """Normalizers of the exponentially tilted renewal measures.

    c1 e^{-lam z} U(z) dz on [0, inf) and c2 e^{lam z} V(z) dz on (-inf, 0]
    both integrate to one under the tables' piecewise-linear quadrature.
    """

    lam: float
    c1: float
    c2: float

    def __post_init__(self) -> None:
        if self.lam <= 0:
            raise ValueError("need lam > 0")
        if self.c1 <= 0 or self.c2 <= 0:
            raise ValueError("normalizers must be positive")


def _exp_linear_integral(nodes: np.ndarray, values: np.ndarray, lam: float) -> float:
    """Integral over [nodes[0], inf) of e^{-lam z} f(z) with f piecewise linear
    on the nodes and continued linearly past the last one.

    Each piece integrates in closed form:
    int e^{-lam z}(u + m (z-a)) dz = (u_a e^{-lam a} - u_b e^{-lam b})/lam
                                     + m (e^{-lam a} - e^{-lam b})/lam^2.
    """
    total = 0.0
    for a, b, ua, ub in zip(nodes[:-1], nodes[1:], values[:-1], values[1:]):
        m = (ub - ua) / (b - a)
        total += (ua * math.exp(-lam * a) - ub * math.exp(-lam * b)) / lam
        total += m * (math.exp(-lam * a) - math.exp(-lam * b)) / (lam * lam)
    if nodes.size >= 2:
        m = (values[-1] - values[-2]) / (nodes[-1] - nodes[-2])
    else:
        m = 0.0
    a, ua = nodes[-1], values[-1]
    total += ua * math.exp(-lam * a) / lam + m * math.exp(-lam * a) / (lam * lam)
    return total


def mu_nu_normalizers(
    table_U: RenewalTable, table_V: RenewalTable, lam: float
) -> TiltedMeasureSpec:
    """Closed-form quadrature of the tilted renewal integrals."""
    if lam <= 0:
        raise ValueError("need lam > 0")
    if table_U.side != "U" or table_V.side != "V":
        raise ValueError("tables must be a (U, V) pair")

    nodes_u = table_U.grid
    vals_u = table_U.values
    if nodes_u[0] > 0.0:
        nodes_u = np.concatenate(([0.0], nodes_u))
        vals_u = np.concatenate(([table_U.evaluate(0.0)], vals_u))
    c1 = 1.0 / _exp_linear_integral(nodes_u, vals_u, lam)

    # mirror V(-y) onto y >= 0 and reuse the same quadrature
    nodes_v = -table_V.grid[::-1]
    vals_v = table_V.values[::-1]
    if nodes_v[0] > 0.0:
        nodes_v = np.concatenate(([0.0], nodes_v))
        vals_v = np.concatenate(([table_V.evaluate(0.0)], vals_v))
    c2 = 1.0 / _exp_linear_integral(nodes_v, vals_v, lam)
    return TiltedMeasureSpec(lam=lam, c1=c1, c2=c2)
