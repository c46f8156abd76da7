"""Deterministic batch Monte Carlo engine.

Work is split into fixed-size batches of 2^14 paths.  Batch b draws from the
stream keyed (master_seed, kernel key, b), so the set of random numbers is a
pure function of the seed and the batch index, never of scheduling.  Results
are combined by a fixed-order pairwise tree over batch index, which makes the
final mean bit-for-bit identical for any worker count.

Adaptive precision keeps the same guarantee: batch counts grow on a fixed
doubling schedule (2, 4, 8, ... batches) and the stopping rule is evaluated
only at round boundaries, so the number of batches consumed depends only on
the batch means themselves.
"""
from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from ._num import pairwise_mean
from ._rng import make_stream

BATCH_PATHS = 1 << 14
CHUNK_ELEMS = 1 << 23  # cap on elements of one (paths x steps) increment block
DEFAULT_BUDGET = 10_000_000  # paths per estimate unless overridden


@dataclass(frozen=True)
class EstimatorResult:
    """One Monte Carlo estimate plus the settings that produced it.

    stderr is the standard error of the mean computed from per-batch means
    (sample sd of batch means / sqrt(batches)).  budget_exhausted marks an
    adaptive run that stopped at the sample budget before reaching its
    precision goal; the estimate is still valid, just less precise.
    """

    mean: float
    stderr: float
    nsamples: int
    master_seed: int
    batches: int
    budget_exhausted: bool = False

    @property
    def rel_se(self) -> float:
        return abs(self.stderr / self.mean) if self.mean != 0.0 else float("inf")


@dataclass(frozen=True)
class VectorResult:
    """Joint result for kernels that report several statistics on common paths."""

    means: np.ndarray
    stderrs: np.ndarray
    nsamples: int
    master_seed: int
    batches: int
    budget_exhausted: bool = False


def chunk_paths_for(n: int) -> int:
    """Paths per simulation chunk so one increment block stays near CHUNK_ELEMS."""
    return max(1, min(BATCH_PATHS, CHUNK_ELEMS // max(1, n)))


def _eval_batch(args) -> np.ndarray:
    kernel, master_seed, batch_index, batch_paths = args
    stream = make_stream(master_seed, *kernel.stream_key(batch_index))
    out = np.atleast_1d(np.asarray(kernel.batch_means(stream, batch_paths), dtype=np.float64))
    return out


def _run_rounds(kernel, master_seed, total_batches, batch_paths, pool):
    tasks = [(kernel, master_seed, b, batch_paths) for b in total_batches]
    if pool is None:
        return [_eval_batch(t) for t in tasks]
    return list(pool.map(_eval_batch, tasks))


def run_kernel(
    kernel,
    master_seed: int,
    *,
    nsamples: int | None = None,
    target_rel_se: float | None = None,
    budget: int = DEFAULT_BUDGET,
    workers: int = 1,
    batch_paths: int = BATCH_PATHS,
) -> VectorResult:
    """Run a batch kernel to a fixed sample count or an adaptive precision goal.

    Exactly one of nsamples / target_rel_se must be given.  The adaptive mode
    targets the relative standard error of the kernel's first statistic.
    """
    if (nsamples is None) == (target_rel_se is None):
        raise ValueError("give exactly one of nsamples or target_rel_se")
    if workers < 1:
        raise ValueError("workers must be >= 1")

    pool = ProcessPoolExecutor(max_workers=workers) if workers > 1 else None
    try:
        if nsamples is not None:
            nbatches = max(2, -(-int(nsamples) // batch_paths))
            rows = _run_rounds(kernel, master_seed, range(nbatches), batch_paths, pool)
            budget_exhausted = False
        else:
            budget_batches = max(2, -(-int(budget) // batch_paths))
            rows: list[np.ndarray] = []
            nbatches = 0
            budget_exhausted = False
            goal = 2
            while True:
                goal = min(goal, budget_batches)
                rows.extend(
                    _run_rounds(kernel, master_seed, range(nbatches, goal), batch_paths, pool)
                )
                nbatches = goal
                mat = np.vstack(rows)
                m = pairwise_mean(mat[:, 0])
                se = float(mat[:, 0].std(ddof=1)) / np.sqrt(nbatches)
                if m != 0.0 and se / abs(m) <= target_rel_se:
                    break
                if nbatches >= budget_batches:
                    budget_exhausted = not (m != 0.0 and se / abs(m) <= target_rel_se)
                    break
                goal = nbatches * 2
    finally:
        if pool is not None:
            pool.shutdown()

    mat = np.vstack(rows)
    k = mat.shape[1]
    means = np.array([pairwise_mean(mat[:, c]) for c in range(k)])
    stderrs = mat.std(axis=0, ddof=1) / np.sqrt(nbatches)
    return VectorResult(
        means=means,
        stderrs=stderrs,
        nsamples=nbatches * batch_paths,
        master_seed=int(master_seed),
        batches=nbatches,
        budget_exhausted=budget_exhausted,
    )


def scalar_result(vr: VectorResult) -> EstimatorResult:
    return EstimatorResult(
        mean=float(vr.means[0]),
        stderr=float(vr.stderrs[0]),
        nsamples=vr.nsamples,
        master_seed=vr.master_seed,
        batches=vr.batches,
        budget_exhausted=vr.budget_exhausted,
    )
