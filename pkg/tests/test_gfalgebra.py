"""Fractional-linear composition algebra and the exact clan-survival formulas."""
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from bpire import (
    CONVENTIONS,
    FracLinCoef,
    WalkPath,
    clan_prob,
    clan_prob_all,
    flin_compose,
    flin_eval,
    flin_fold,
    flin_from_increment,
    no_survivor_prob,
    reversed_rep_weight,
)

inc_strategy = st.floats(min_value=-3.0, max_value=3.0, allow_nan=False)
path_strategy = st.lists(inc_strategy, min_size=1, max_size=24)


def naive_extinction(xs, s):
    """Direct float iteration F_1(F_2(...F_n(s))) with F_k(s) = 1 - 1/(e^{-x_k}/(1-s) + 1).

    Works outside the log domain; trustworthy for |x| <= ~3 and short paths.
    """
    val = s
    for x in reversed(xs):
        val = 1.0 - 1.0 / (math.exp(-x) / (1.0 - val) + 1.0)
    return val


# ---------------------------------------------------------------- flin algebra


def test_identity_coefficient_is_neutral():
    ident = FracLinCoef.identity()
    c = flin_from_increment(0.7)
    for s in (0.0, 0.3, 0.99):
        assert flin_eval(ident, s) == pytest.approx(s, abs=1e-15)
    left = flin_compose(ident, c)
    right = flin_compose(c, ident)
    for s in (0.0, 0.5, 0.9):
        assert flin_eval(left, s) == pytest.approx(flin_eval(c, s), rel=1e-14)
        assert flin_eval(right, s) == pytest.approx(flin_eval(c, s), rel=1e-14)


def test_single_step_evaluation():
    x = 0.4
    c = flin_from_increment(x)
    for s in (0.0, 0.2, 0.8):
        want = 1.0 - 1.0 / (math.exp(-x) / (1.0 - s) + 1.0)
        assert flin_eval(c, s) == pytest.approx(want, rel=1e-14)


def test_eval_domain():
    c = flin_from_increment(0.0)
    with pytest.raises(ValueError):
        flin_eval(c, 1.0)
    with pytest.raises(ValueError):
        flin_eval(c, -0.1)
    with pytest.raises(ValueError):
        flin_from_increment(math.inf)


@given(inc_strategy, inc_strategy, inc_strategy, st.floats(min_value=0.0, max_value=0.99))
def test_composition_is_associative(x, y, z, s):
    a, b, c = (flin_from_increment(v) for v in (x, y, z))
    lhs = flin_compose(flin_compose(a, b), c)
    rhs = flin_compose(a, flin_compose(b, c))
    assert flin_eval(lhs, s) == pytest.approx(flin_eval(rhs, s), rel=1e-12, abs=1e-14)


@given(path_strategy, st.floats(min_value=0.0, max_value=0.99))
def test_fold_matches_naive_iteration(xs, s):
    got = flin_eval(flin_fold(xs), s)
    want = naive_extinction(xs, s)
    assert got == pytest.approx(want, rel=1e-9, abs=1e-12)


@given(path_strategy)
def test_fold_coefficients_equal_walk_functionals(xs):
    # the folded (A, B) must be (e^{-S_n}, sum_{k<n} e^{-S_k}) exactly
    c = flin_fold(xs)
    ps = np.concatenate([[0.0], np.cumsum(np.asarray(xs, dtype=np.float64))])
    assert c.log_A == pytest.approx(-ps[-1], rel=1e-12, abs=1e-12)
    want_b = float(np.log(np.sum(np.exp(-ps[:-1]))))
    assert c.log_B == pytest.approx(want_b, rel=1e-10, abs=1e-10)


def test_constant_walk_survival():
    # 1 - F_{0,n}(0) = 1/(n+1) when every increment is 0
    for n in (1, 2, 5, 17, 100):
        c = flin_fold(np.zeros(n))
        assert 1.0 - flin_eval(c, 0.0) == pytest.approx(1.0 / (n + 1), rel=1e-13)


# ---------------------------------------------------------- clan probabilities


def tail_sum(ps, k):
    n = len(ps) - 1
    return sum(math.exp(-ps[j]) for j in range(k, n + 1))


def naive_clan_prob(ps, i, convention):
    """Float-domain reference for tame paths."""
    n = len(ps) - 1
    a_n = math.exp(-ps[n])
    if i == 0:
        return a_n / (tail_sum(ps, 0) * tail_sum(ps, 1))
    a_i = math.exp(-ps[i])
    if convention == "paper_corollary":
        return a_i * a_n / (tail_sum(ps, i + 1) * tail_sum(ps, 1))
    return a_i * a_n / (tail_sum(ps, 0) * tail_sum(ps, i + 1))


@given(path_strategy)
def test_clan_prob_matches_float_reference(xs):
    p = WalkPath.from_increments(xs)
    ps = p.partial_sums
    for conv in CONVENTIONS:
        for i in range(p.n):
            got = clan_prob(p, i, conv).probability
            want = naive_clan_prob(ps, i, conv)
            assert got == pytest.approx(want, rel=1e-10)


def test_constant_walk_clan_anchors(zeros_path):
    # closed forms when X == 0
    for n in (1, 3, 10, 64, 100):
        p = zeros_path(n)
        assert clan_prob(p, 0, "paper_corollary").probability == pytest.approx(
            1.0 / (n * (n + 1)), abs=1e-12
        )
        assert clan_prob(p, 0, "strict").probability == pytest.approx(
            1.0 / (n * (n + 1)), abs=1e-12
        )
        for i in range(1, n):
            assert clan_prob(p, i, "paper_corollary").probability == pytest.approx(
                1.0 / (n * (n - i)), abs=1e-12
            )
            assert clan_prob(p, i, "strict").probability == pytest.approx(
                1.0 / ((n + 1) * (n - i)), abs=1e-12
            )
        assert no_survivor_prob(p) == pytest.approx(1.0 / (n + 1), abs=1e-12)


@given(path_strategy)
def test_convention_bridge_identity(xs):
    # strict * d_0 == paper_corollary * d_1 exactly: the two conventions differ
    # by the ratio (a_n + b_n) / (a_n + b_n - 1) for every i >= 1
    p = WalkPath.from_increments(xs)
    ps = p.partial_sums
    d0 = tail_sum(ps, 0)
    d1 = tail_sum(ps, 1)
    for i in range(1, p.n):
        lhs = clan_prob(p, i, "strict").probability * d0
        rhs = clan_prob(p, i, "paper_corollary").probability * d1
        assert lhs == pytest.approx(rhs, rel=1e-10)


@given(path_strategy)
def test_probabilities_in_unit_interval_and_partition_bound(xs):
    p = WalkPath.from_increments(xs)
    total = no_survivor_prob(p)
    assert 0.0 < total < 1.0
    for i in range(p.n):
        h = clan_prob(p, i, "strict").probability
        assert 0.0 < h < 1.0
        total += h
    # the strict events and the no-survivor event are disjoint
    assert total <= 1.0 + 1e-12


def test_clan_prob_all_agrees_with_scalar(rand_path):
    p = rand_path(20, seed=3)
    for conv in CONVENTIONS:
        vec = clan_prob_all(p, conv)
        assert vec.shape == (20,)
        for i in range(20):
            assert vec[i] == pytest.approx(clan_prob(p, i, conv).probability, rel=1e-13)


def test_clan_prob_validation(rand_path):
    p = rand_path(5)
    with pytest.raises(ValueError):
        clan_prob(p, 5, "strict")
    with pytest.raises(ValueError):
        clan_prob(p, -1, "strict")
    with pytest.raises(ValueError):
        clan_prob(p, 2, "weird")
    with pytest.raises(ValueError):
        clan_prob_all(p, "weird")


def test_extreme_path_stays_finite():
    # deep minimum then recovery: naive float formulas would overflow
    p = WalkPath.from_increments([-400.0, -400.0, 800.0, 0.5])
    for conv in CONVENTIONS:
        for i in range(4):
            c = clan_prob(p, i, conv)
            # the linear probability may underflow to 0; the log never degrades
            assert 0.0 <= c.probability <= 1.0
            assert math.isfinite(c.log_h) and c.log_h < 0.0
    assert 0.0 <= no_survivor_prob(p) < 1.0


# ------------------------------------------------------ reversed representation


def test_reversed_weight_constant_walk(zeros_path):
    # on the zero walk the weight is deterministic and equals the clan
    # probability it estimates: 1/(j n) for j < n and 1/(n (n+1)) at j = n
    for n in (2, 4, 9):
        p = zeros_path(n)
        for j in range(1, n):
            assert reversed_rep_weight(p, j) == pytest.approx(1.0 / (j * n), rel=1e-13)
        assert reversed_rep_weight(p, n) == pytest.approx(1.0 / (n * (n + 1)), rel=1e-13)


@given(path_strategy, st.integers(min_value=1, max_value=24))
def test_reversed_weight_matches_float_reference(xs, j):
    p = WalkPath.from_increments(xs)
    j = 1 + (j - 1) % p.n
    ps = p.partial_sums
    denom_head = sum(math.exp(ps[k]) for k in range(j)) if j < p.n else sum(
        math.exp(ps[k]) for k in range(p.n + 1)
    )
    denom_all = sum(math.exp(ps[k]) for k in range(p.n))
    want = math.exp(ps[j]) / (denom_head * denom_all)
    assert reversed_rep_weight(p, j) == pytest.approx(want, rel=1e-10)


def test_reversed_weight_bounds():
    p = WalkPath.from_increments([0.3, -0.2, 0.1])
    with pytest.raises(ValueError):
        reversed_rep_weight(p, 0)
    with pytest.raises(ValueError):
        reversed_rep_weight(p, 4)


def test_reversed_weight_unbiased_for_constant_and_symmetric_cases(zeros_path):
    # j = n corresponds to the clan of the very first immigrant (i = 0)
    n = 6
    p = zeros_path(n)
    assert reversed_rep_weight(p, n) == pytest.approx(
        clan_prob(p, 0, "paper_corollary").probability, rel=1e-13
    )
    for j in range(1, n):
        assert reversed_rep_weight(p, j) == pytest.approx(
            clan_prob(p, n - j, "paper_corollary").probability, rel=1e-13
        )
