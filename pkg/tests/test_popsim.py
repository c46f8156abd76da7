"""Branching-population oracle: clan bookkeeping, overflow, event frequencies."""
import math

import numpy as np
import pytest

from bpire import (
    ClanOverflowError,
    ClanVector,
    WalkPath,
    clan_prob,
    event_indicator,
    no_survivor_prob,
    oracle_event_frequencies,
    oracle_event_frequency,
    simulate_population,
    simulate_population_block,
    step_generation,
)
from bpire._rng import TAG_ORACLE, make_stream


def test_initial_clan_vector():
    v = ClanVector.initial()
    assert v.generation == 0
    assert v.sizes.tolist() == [1]
    assert v.total == 1
    assert v.pre_immigrant.size == 0


def test_step_appends_one_immigrant():
    v = ClanVector.initial()
    w = step_generation(v, 0.0, make_stream(1, TAG_ORACLE, 0))
    assert w.generation == 1
    assert w.sizes.shape == (2,)
    assert w.sizes[-1] == 1  # the new immigrant
    assert w.sizes.dtype == np.int64
    # dead clans stay dead
    dead = ClanVector(generation=1, sizes=np.array([0, 1], dtype=np.int64))
    w2 = step_generation(dead, 3.0, make_stream(1, TAG_ORACLE, 1))
    assert w2.sizes[0] == 0


def test_simulate_population_shape(rand_path):
    p = rand_path(7, seed=9)
    v = simulate_population(p, make_stream(2, TAG_ORACLE, 0))
    assert v.generation == 7
    assert v.sizes.shape == (8,)
    assert v.sizes[-1] == 1
    assert np.all(v.sizes >= 0)
    assert v.pre_immigrant.shape == (7,)


def test_clan_means_track_environment():
    # E[size of clan k at generation n | path] = e^{S_n - S_k}; check to 4 se
    p = WalkPath.from_increments([0.4, -0.3, 0.2, 0.1])
    reps = 60_000
    sizes, valid = simulate_population_block(p, reps, make_stream(3, TAG_ORACLE, 0))
    assert valid.all()
    ps = p.partial_sums
    n = p.n
    for k in range(n + 1):
        want = math.exp(ps[n] - ps[k])
        got = sizes[:, k].mean()
        se = sizes[:, k].std(ddof=1) / math.sqrt(reps)
        assert abs(got - want) < 4 * se + 1e-12, (k, got, want, se)


def test_block_determinism_and_mask():
    p = WalkPath.from_increments([0.2, -0.1, 0.3])
    a, va = simulate_population_block(p, 500, make_stream(7, TAG_ORACLE, 1))
    b, vb = simulate_population_block(p, 500, make_stream(7, TAG_ORACLE, 1))
    assert np.array_equal(a, b)
    assert np.array_equal(va, vb)
    assert a.shape == (500, 4)
    assert np.all(a[:, -1] == 1)


def test_overflow_raises_and_flags():
    blowup = WalkPath.from_increments([40.0] * 5)
    with pytest.raises(ClanOverflowError):
        simulate_population(blowup, make_stream(11, TAG_ORACLE, 0))
    sizes, valid = simulate_population_block(blowup, 50, make_stream(11, TAG_ORACLE, 0))
    assert not valid.any()
    assert np.all(sizes[~valid] == 0)


def test_event_indicator_matches_definitions():
    # generation 3, survivors encoded by hand; last entry is the new immigrant
    def clans(*sizes):
        return ClanVector(generation=3, sizes=np.array(sizes, dtype=np.int64))

    only_1 = clans(0, 5, 0, 1)
    assert event_indicator(only_1, 1, "strict")
    assert event_indicator(only_1, 1, "paper_corollary")
    assert not event_indicator(only_1, 2, "strict")
    both_0_and_1 = clans(2, 5, 0, 1)
    assert not event_indicator(both_0_and_1, 1, "strict")
    assert event_indicator(both_0_and_1, 1, "paper_corollary")  # clan 0 unconstrained
    assert not event_indicator(both_0_and_1, 0, "strict")
    only_0 = clans(2, 0, 0, 1)
    assert event_indicator(only_0, 0, "strict")
    assert event_indicator(only_0, 0, "paper_corollary")  # i = 0 same in both


def test_oracle_matches_exact_formula_constant_walk(zeros_path):
    n = 3
    p = zeros_path(n)
    reps = 200_000
    for conv in ("paper_corollary", "strict"):
        table = oracle_event_frequencies(p, reps, make_stream(5, TAG_ORACLE, 0), conv)
        assert table.convention == conv
        assert table.reps_valid == reps
        for i in range(n):
            want = clan_prob(p, i, conv).probability
            assert abs(table.freqs[i] - want) < 4 * table.ses[i], (conv, i)
        want_none = no_survivor_prob(p)
        assert abs(table.none_alive_freq - want_none) < 4 * table.none_alive_se


def test_oracle_single_i_consistent_with_table(rand_path):
    p = rand_path(4, seed=21, sigma=0.5)
    freq, se = oracle_event_frequency(p, 2, "strict", 50_000, make_stream(9, TAG_ORACLE, 0))
    table = oracle_event_frequencies(p, 50_000, make_stream(9, TAG_ORACLE, 0), "strict")
    assert freq == pytest.approx(table.freqs[2], abs=0.0)
    assert se == pytest.approx(table.ses[2], abs=0.0)


def test_oracle_index_validation(rand_path):
    p = rand_path(4)
    with pytest.raises(ValueError):
        oracle_event_frequency(p, 4, "strict", 100, make_stream(0, TAG_ORACLE, 0))
    with pytest.raises(ValueError):
        oracle_event_frequency(p, -1, "strict", 100, make_stream(0, TAG_ORACLE, 0))


def test_partition_frequencies_sum_to_one(zeros_path):
    # strict single-clan events, the no-survivor event, and the multi-survivor
    # remainder partition the replicate space exactly
    p = zeros_path(5)
    reps = 20_000
    t = oracle_event_frequencies(p, reps, make_stream(13, TAG_ORACLE, 0), "strict")
    total = t.freqs.sum() + t.none_alive_freq + t.multi_alive_freq
    assert total == pytest.approx(1.0, abs=1e-12)
