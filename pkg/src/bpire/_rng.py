"""Deterministic stream derivation on top of the counter-based Philox generator.

Every sampling site in the package derives its generator from
(master_seed, tag, *key_ints) through SeedSequence spawn keys.  Streams with
distinct keys are statistically independent, and a given key always yields the
same sequence, independent of worker count or scheduling.
"""
from __future__ import annotations

import numpy as np

# Stream tags.  Frozen: changing a value changes every seeded result downstream.
TAG_PATH = 1            # ad-hoc single path / increment sampling
TAG_EVENT_DIRECT = 2    # clan-probability estimator, direct representation
TAG_EVENT_REVERSED = 3  # clan-probability estimator, reversed representation
TAG_WALKSERIES = 4      # walk-functional series kernels
TAG_ORACLE = 5          # branching-population oracle replicates
TAG_RENEWAL_U = 6
TAG_RENEWAL_V = 7
TAG_CONDITIONED = 8     # harmonicity / weighted and rejection expectations
TAG_DUALITY = 9
TAG_DECOMPOSITION = 10
TAG_TAU_WINDOW_WALK = 11  # tau-window kernel, walk integrand (reversed shares TAG_EVENT_REVERSED)

_MASK32 = (1 << 32) - 1


def _as_key(parts: tuple[int, ...]) -> tuple[int, ...]:
    out = []
    for p in parts:
        p = int(p)
        if p < 0:
            raise ValueError(f"stream key parts must be nonnegative, got {p}")
        # split values wider than 32 bits so SeedSequence accepts them
        while True:
            out.append(p & _MASK32)
            p >>= 32
            if p == 0:
                break
    return tuple(out)


def make_stream(master_seed: int, *key: int) -> np.random.Generator:
    """Generator for the stream identified by (master_seed, *key)."""
    ss = np.random.SeedSequence(int(master_seed), spawn_key=_as_key(key))
    return np.random.Generator(np.random.Philox(ss))
