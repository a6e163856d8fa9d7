import math
from fractions import Fraction
from itertools import chain, combinations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from bsds.errors import ArgumentError, StructuralError
from bsds.metrics import (
    DEFAULT_BUDGET_FRACTIONS,
    BsdsParams,
    BudgetGrid,
    ComponentRates,
    CoverageMode,
    LabeledPool,
    Selection,
    abstain_threshold,
    auroc,
    auxiliary_metrics,
    bayes_abstain_dominated,
    bsds,
    bsds_value,
    component_rates,
    dqs,
    expected_random_bsds,
    oracle_selection,
    ranking,
    resolve_budget,
)

from oracles import auroc_pairs, bsds_exact, mcc_direct, rates_by_count, top_b_by_sort

DEFAULT = BsdsParams(1.0, 0.3)


def worked_pool():
    return LabeledPool.from_labels([1] * 10 + [0] * 90)


# -- component rates -----------------------------------------------------------

def test_rates_eight_of_ten():
    pool = worked_pool()
    sel = Selection.full_coverage(list(range(8)) + [50, 51], 10)
    r = component_rates(pool, sel)
    assert (r.hr, r.fdr, r.cov, r.tp) == (0.8, 0.2, 1.0, 8)
    assert r.ppv == pytest.approx(0.8, abs=1e-12)


def test_full_abstention_rates():
    pool = worked_pool()
    r = component_rates(pool, Selection([], list(range(100)), 10))
    assert (r.hr, r.fdr, r.cov) == (0.0, 0.0, 0.0)


def test_rates_match_exhaustive_count_on_every_subset():
    labels = [1, 0, 1, 0, 0]
    pool = LabeledPool.from_labels(labels)
    for subset in chain.from_iterable(combinations(range(5), k) for k in range(6)):
        r = component_rates(pool, Selection.full_coverage(list(subset), 5))
        hr, fdr, cov = rates_by_count(labels, subset)
        assert (r.hr, r.fdr, r.cov) == (float(hr), float(fdr), float(cov))


def test_rates_with_abstention_match_count():
    rng = np.random.default_rng(3)
    for _ in range(200):
        n = int(rng.integers(1, 25))
        labels = rng.integers(0, 2, n).tolist()
        perm = rng.permutation(n)
        k = int(rng.integers(0, n + 1))
        a = int(rng.integers(0, n - k + 1))
        sel, abst = perm[:k].tolist(), perm[k:k + a].tolist()
        r = component_rates(LabeledPool.from_labels(labels), Selection(sel, abst, max(k, 1)))
        hr, fdr, cov = rates_by_count(labels, sel, abst)
        assert r.hr == pytest.approx(float(hr), abs=1e-15)
        assert r.fdr == pytest.approx(float(fdr), abs=1e-15)
        assert r.cov == pytest.approx(float(cov), abs=1e-15)


def test_out_of_range_index_is_structural():
    with pytest.raises(StructuralError):
        component_rates(worked_pool(), Selection.full_coverage([100], 1))


def test_hit_free_pool_is_flagged_not_raised():
    r = component_rates(LabeledPool.from_labels([0, 0, 0]), Selection.full_coverage([0], 1))
    assert r.degenerate and r.hr == 0.0 and r.fdr == 1.0


def test_selection_invariants():
    with pytest.raises(StructuralError):
        Selection([0, 1, 2], [], 2)
    with pytest.raises(StructuralError):
        Selection([0, 1], [1], 2)
    with pytest.raises(StructuralError):
        Selection([0, 0], [], 2)


def test_pool_rejects_bad_labels():
    with pytest.raises(StructuralError):
        LabeledPool.from_labels([0, 2])
    with pytest.raises(StructuralError):
        LabeledPool.from_labels([])


def test_prevalence_is_exact():
    pool = LabeledPool.from_labels([1, 0, 0])
    assert pool.prevalence == 1 / 3


# -- BSDS and DQS ---------------------------------------------------------------

def test_bsds_worked_values():
    assert bsds(ComponentRates(0.8, 0.2, 1.0), DEFAULT) == pytest.approx(0.6, abs=1e-12)
    assert bsds(ComponentRates(0.5, 0.0, 0.5), DEFAULT) == pytest.approx(0.35, abs=1e-12)


@pytest.mark.parametrize("lam,gamma", [(0.0, 0.0), (1.0, 0.3), (5.0, 1.0)])
def test_full_abstention_scores_minus_gamma(lam, gamma):
    assert bsds(ComponentRates(0.0, 0.0, 0.0), BsdsParams(lam, gamma)) == -gamma


def test_dqs_examples():
    assert dqs([0.6, 0.6, 0.6]) == pytest.approx(0.6, abs=1e-12)
    assert dqs([1.0, -1.3]) == pytest.approx(-0.15, abs=1e-12)
    with pytest.raises(ArgumentError):
        dqs([])


def test_dqs_equals_independent_resummation():
    rng = np.random.default_rng(8)
    values = rng.uniform(-1.3, 1.0, 6).tolist()
    by_fraction = sum((Fraction(v) for v in reversed(values)), Fraction(0)) / 6
    assert dqs(values) == pytest.approx(float(by_fraction), abs=1e-15)


def test_params_validation():
    with pytest.raises(ArgumentError):
        BsdsParams(-0.1, 0.3)
    with pytest.raises(ArgumentError):
        BsdsParams(1.0, float("nan"))


rate_st = st.floats(0.0, 1.0, allow_nan=False)
lam_st = st.floats(0.0, 10.0, allow_nan=False)
gamma_st = st.floats(0.0, 1.0, allow_nan=False)


@given(st.integers(1, 30).flatmap(lambda n: st.tuples(
    st.lists(st.integers(0, 1), min_size=n, max_size=n),
    st.permutations(list(range(n))),
    st.integers(0, n), st.integers(0, n))), lam_st, gamma_st)
@settings(max_examples=300, deadline=None)
def test_boundedness_property(case, lam, gamma):
    labels, perm, k, a = case
    a = min(a, len(labels) - k)
    sel = Selection(perm[:k], perm[k:k + a], max(k, 1))
    value = bsds(component_rates(LabeledPool.from_labels(labels), sel), BsdsParams(lam, gamma))
    assert -(lam + gamma) - 1e-12 <= value <= 1.0 + 1e-12


@given(rate_st, rate_st, rate_st, rate_st, lam_st, gamma_st)
def test_monotonicity(x, y, other, cov, lam, gamma):
    # exact arithmetic: float rounding can hide a tiny strict increase
    x, y, other, cov, lam, gamma = map(Fraction, (x, y, other, cov, lam, gamma))
    lo, hi = min(x, y), max(x, y)
    if hi > lo:
        assert bsds_value(hi, other, cov, lam, gamma) > bsds_value(lo, other, cov, lam, gamma)
        if lam > 0:
            assert bsds_value(other, hi, cov, lam, gamma) < bsds_value(other, lo, cov, lam, gamma)
    assert bsds_value(other, cov, hi, lam, gamma) >= bsds_value(other, cov, lo, lam, gamma)


def test_swap_monotonicity():
    rng = np.random.default_rng(5)
    for _ in range(500):
        n = int(rng.integers(2, 20))
        labels = rng.integers(0, 2, n)
        if labels.sum() == 0 or labels.sum() == n:
            continue
        pool = LabeledPool.from_labels(labels)
        sel_size = int(rng.integers(1, n + 1))
        perm = rng.permutation(n)
        chosen = list(perm[:sel_size])
        outside_hits = [i for i in perm[sel_size:] if labels[i] == 1]
        inside_miss = [i for i in chosen if labels[i] == 0]
        if not outside_hits or not inside_miss:
            continue
        swapped = [outside_hits[0] if i == inside_miss[0] else i for i in chosen]
        params = BsdsParams(float(rng.uniform(0, 5)), float(rng.uniform(0, 1)))
        before = bsds(component_rates(pool, Selection.full_coverage(chosen, sel_size)), params)
        after = bsds(component_rates(pool, Selection.full_coverage(swapped, sel_size)), params)
        assert after >= before


@given(st.lists(st.floats(-1.3, 1.0, allow_nan=False), min_size=1, max_size=8), st.randoms())
def test_dqs_permutation_invariant(values, rnd):
    shuffled = list(values)
    rnd.shuffle(shuffled)
    assert dqs(shuffled) == pytest.approx(dqs(values), abs=1e-12)


# -- abstention -------------------------------------------------------------

def test_bayes_dominance_examples():
    assert bayes_abstain_dominated(ComponentRates(0.5, 0.5, 1.0), DEFAULT)
    assert not bayes_abstain_dominated(ComponentRates(0.0, 1.0, 1.0), BsdsParams(2.0, 0.3))


@given(rate_st, rate_st, lam_st, gamma_st)
def test_bayes_dominance_agrees_with_direct_comparison(hr, fdr, lam, gamma):
    params = BsdsParams(lam, gamma)
    direct = bsds_value(hr, fdr, 1.0, lam, gamma) >= -gamma
    assert bayes_abstain_dominated(ComponentRates(hr, fdr, 1.0), params) == direct


def test_abstain_threshold():
    assert abstain_threshold(BsdsParams(1.0, 0.3)) == pytest.approx(0.15, abs=1e-12)
    assert abstain_threshold(BsdsParams(2.0, 0.0)) == 0.0
    exact = Fraction(3, 100) / (1 + Fraction(1, 10))
    assert abstain_threshold(BsdsParams(0.1, 0.03)) == pytest.approx(float(exact), abs=1e-15)


# -- random baseline -----------------------------------------------------------

def test_random_baseline_default_grid_average():
    values = [expected_random_bsds(10_000, 0.035, resolve_budget(f, 10_000), BsdsParams(1.0, 0.3))
              for f in DEFAULT_BUDGET_FRACTIONS]
    assert dqs(values) == pytest.approx(-0.8183333333, abs=1e-9)
    assert round(dqs(values), 3) == -0.818


def test_random_baseline_modes():
    p = BsdsParams(1.0, 0.3)
    full = expected_random_bsds(200, 0.1, 20, p)
    rest = expected_random_bsds(200, 0.1, 20, p, CoverageMode.ABSTAIN_REMAINDER)
    assert full == pytest.approx(0.1 - 0.9, abs=1e-12)
    assert rest == pytest.approx(full - 0.3 * 0.9, abs=1e-12)
    assert expected_random_bsds(50, 0.2, 50, BsdsParams(0.0, 0.0)) == 1.0


def test_random_baseline_monte_carlo():
    n, hits, b = 200, 20, 20
    labels = np.zeros(n, dtype=np.int8)
    labels[:hits] = 1
    rng = np.random.default_rng(21)
    draws = 100_000
    picks = np.argsort(rng.random((draws, n)), axis=1)[:, :b]
    tp = labels[picks].sum(axis=1)
    values = tp / hits - 1.0 * (b - tp) / b
    mean, se = values.mean(), values.std(ddof=1) / math.sqrt(draws)
    analytic = expected_random_bsds(n, hits / n, b, BsdsParams(1.0, 0.3))
    assert abs(mean - analytic) <= 3 * se


# -- oracle ---------------------------------------------------------------------

def test_oracle_examples():
    pool = worked_pool()
    r = component_rates(pool, oracle_selection(pool, 5))
    assert (r.hr, r.fdr) == (0.5, 0.0)
    pool3 = LabeledPool.from_labels([0, 1, 0, 1, 1, 0, 0, 0])
    sel = oracle_selection(pool3, 5)
    # hits exhausted: the spare slots stay empty instead of taking non-hits
    assert sel.selected.tolist() == [1, 3, 4]
    r3 = component_rates(pool3, sel)
    assert (r3.hr, r3.fdr, r3.cov) == (1.0, 0.0, 1.0)
    empty = oracle_selection(LabeledPool.from_labels([0, 0, 0]), 2)
    assert empty.selected.tolist() == [2, 1]


def test_oracle_attains_best_selection_of_any_size():
    rng = np.random.default_rng(2)
    for _ in range(60):
        n = int(rng.integers(1, 10))
        labels = rng.integers(0, 2, n).tolist()
        pool = LabeledPool.from_labels(labels)
        for b in range(1, n + 1):
            best = max(bsds_exact(labels, c, (), 1, Fraction(3, 10))
                       for k in range(1, b + 1) for c in combinations(range(n), k))
            got = bsds(component_rates(pool, oracle_selection(pool, b)), DEFAULT)
            assert got == pytest.approx(float(best), abs=1e-12)


# -- budgets and ranking ---------------------------------------------------------

def test_budget_resolution():
    assert resolve_budget(0.01, 41_127) == 411
    assert resolve_budget(0.5, 41_127) == 20_564
    assert resolve_budget(0.01, 10) == 1
    assert resolve_budget(0.25, 10) == 3
    assert BudgetGrid().resolve(2000) == (20, 40, 100, 200, 400, 1000)
    with pytest.raises(ArgumentError):
        BudgetGrid((0.1, 0.05))
    with pytest.raises(ArgumentError):
        BudgetGrid((0.0, 0.5))


def test_ranking_tie_break():
    assert ranking([0.9, 0.5, 0.9, 0.1])[:2].tolist() == [0, 2]


# -- auxiliary metrics ------------------------------------------------------------

def test_perfect_scores_metrics():
    labels = [1, 1, 0, 0, 0, 0, 0, 0, 0, 0]
    pool = LabeledPool.from_labels(labels)
    aux = auxiliary_metrics(pool, np.array(labels, dtype=float), 2)
    assert aux.ef == pytest.approx(1 / pool.prevalence, abs=1e-12)
    assert aux.auroc == 1.0 and aux.mcc == pytest.approx(1.0, abs=1e-12)


def test_null_scores_auroc_near_half():
    rng = np.random.default_rng(4)
    labels = (rng.random(20_000) < 0.2).astype(int)
    assert auroc(labels, rng.random(20_000)) == pytest.approx(0.5, abs=0.02)


def test_aux_metrics_match_brute_force():
    rng = np.random.default_rng(6)
    for _ in range(50):
        labels = rng.integers(0, 2, 50)
        if labels.sum() in (0, 50):
            continue
        scores = np.round(rng.random(50), 1)  # coarse values force ties
        b = int(rng.integers(1, 51))
        aux = auxiliary_metrics(LabeledPool.from_labels(labels), scores, b)
        assert aux.auroc == pytest.approx(float(auroc_pairs(labels.tolist(), scores.tolist())), abs=1e-12)
        top = top_b_by_sort(scores.tolist(), b)
        tp = int(sum(labels[i] for i in top))
        fn = int(labels.sum()) - tp
        expected = mcc_direct(tp, b - tp, fn, 50 - b - fn)
        if expected is None:
            assert aux.mcc is None
        else:
            assert aux.mcc == pytest.approx(expected, abs=1e-12)


def test_one_class_pool_flags_undefined():
    aux = auxiliary_metrics(LabeledPool.from_labels([0, 0, 0]), [0.1, 0.2, 0.3], 1)
    assert aux.auroc is None and aux.mcc is None and aux.ef is None


@given(st.lists(st.floats(-100, 100, allow_nan=False), min_size=4, max_size=30),
       st.floats(0.01, 50), st.floats(-50, 50))
def test_affine_invariance(scores, a, b):
    s = np.array(scores)
    t = a * s + b
    # the transform may merge distinct values through rounding; only test when order is preserved exactly
    if not np.array_equal(np.argsort(s, kind="stable"), np.argsort(t, kind="stable")):
        return
    if len(np.unique(s)) != len(np.unique(t)):
        return
    labels = np.arange(len(scores)) % 2
    assert auroc(labels, s) == auroc(labels, t)
    assert ranking(s)[:3].tolist() == ranking(t)[:3].tolist()
