import itertools
import math
import random

import numpy as np
import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st

from corag.evaluation import (
    ScorePoint,
    _linear_solve,
    bootstrap_ci,
    dominates,
    exact_match,
    f1,
    fit_log_linear,
    normalize_answer,
    pareto_frontier,
    recall_at_k,
)
from corag.retrieval import Document, DocumentStore, RankedList

from oracles import brute_frontier

words = st.text(alphabet="abcdeAB .,!-'the ", max_size=30)


def test_normalization_examples():
    assert normalize_answer("The Vaudevillains") == "vaudevillains"
    assert normalize_answer("4 months.") == "4 months"
    assert normalize_answer("  An   apple, a day ") == "apple day"


@given(words)
def test_normalization_idempotent(text):
    once = normalize_answer(text)
    assert normalize_answer(once) == once


def test_em_examples():
    assert exact_match("Spain", {"Spain"}) == 1
    assert exact_match("University of New Hampshire", {"Stony Brook University"}) == 0
    assert exact_match("", {"x"}) == 0
    assert exact_match("the spain.", ["France", "Spain"]) == 1


def test_f1_examples():
    assert f1("4 months", "4") == pytest.approx(2 / 3, abs=1e-12)
    assert f1("same words", "same words") == 1.0
    assert f1("alpha", "beta") == 0.0
    assert f1("", "") == 1.0
    assert f1("a", "x") == 0.0  # "a" normalizes to nothing


@given(words, words)
def test_em_implies_f1_and_symmetry(pred, gold):
    if exact_match(pred, [gold]):
        assert f1(pred, [gold]) == 1.0
    assert f1(pred, gold) == pytest.approx(f1(gold, pred))
    assert 0.0 <= f1(pred, gold) <= 1.0


def test_recall_examples():
    store = DocumentStore([Document("a", "", "Paris is the capital of France."), Document("b", "", "Berlin.")])
    ranked = RankedList((("a", 2.0), ("b", 1.0)))
    assert recall_at_k(ranked, ["paris"], store, 10) == 1
    assert recall_at_k(ranked, ["Rome"], store, 100) == 0
    assert recall_at_k(RankedList((("b", 2.0), ("a", 1.0))), ["Paris"], store, 1) == 0
    # titles are not searched
    store2 = DocumentStore([Document("t", "Paris", "A city.")])
    assert recall_at_k(RankedList((("t", 1.0),)), ["Paris"], store2, 1) == 0


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 10_000))
def test_recall_monotone_in_k(seed):
    rng = random.Random(seed)
    store = DocumentStore([Document(f"d{i}", "", f"tok{rng.randint(0, 30)} tok{rng.randint(0, 30)}") for i in range(40)])
    ids = [d.doc_id for d in store]
    rng.shuffle(ids)
    ranked = RankedList(tuple((d, -i) for i, d in enumerate(ids)))
    gold = [f"tok{rng.randint(0, 30)}"]
    vals = [recall_at_k(ranked, gold, store, k) for k in range(1, 41)]
    assert vals == sorted(vals)


# --------------------------------------------------------------------------
# Pareto frontier
# --------------------------------------------------------------------------


def test_frontier_examples():
    p = ScorePoint(100, 50)
    assert pareto_frontier([p]) == [p]
    assert pareto_frontier([ScorePoint(100, 50), ScorePoint(200, 40)]) == [ScorePoint(100, 50)]
    with pytest.raises(ValueError):
        ScorePoint(0, 1)


@settings(max_examples=200, deadline=None)
@given(st.lists(st.tuples(st.integers(1, 12), st.integers(0, 8)), min_size=1, max_size=25))
def test_frontier_matches_brute_force(raw):
    points = [ScorePoint(float(x), float(y), f"p{i}") for i, (x, y) in enumerate(raw)]
    got = pareto_frontier(points)
    want = brute_frontier(points)
    assert sorted(got, key=lambda p: p.label) == sorted(want, key=lambda p: p.label)
    assert [p.avg_tokens for p in got] == sorted(p.avg_tokens for p in got)
    assert not any(dominates(q, p) for p in got for q in got)


# --------------------------------------------------------------------------
# log-linear fit
# --------------------------------------------------------------------------


def test_exact_recovery():
    xs = [50, 120, 300, 700, 1500, 4000, 9000, 20000]
    pts = [(x, 5 * math.log(x + 100) + 10) for x in xs]
    fit = fit_log_linear(pts)
    for got, want in zip((fit.a, fit.b, fit.c), (5, 100, 10)):
        assert abs(got - want) / abs(want) < 1e-3
    assert fit.residual < 1e-9
    assert fit.b > -min(xs)


def test_flat_line_gives_zero_slope():
    fit = fit_log_linear([(x, 42.0) for x in (10, 20, 40, 80)])
    assert abs(fit.a) < 1e-9
    assert float(fit.predict(33.0)) == pytest.approx(42.0)


def test_fit_needs_three_distinct_x():
    with pytest.raises(ValueError):
        fit_log_linear([(1, 1), (1, 2), (2, 3)])


@settings(max_examples=30, deadline=None)
@given(st.lists(st.tuples(st.floats(1, 1e4), st.floats(0, 100)), min_size=3, max_size=8, unique_by=lambda t: round(t[0], 3)))
def test_fit_is_optimal_in_a_c_at_returned_b(pts):
    fit = fit_log_linear(pts)
    x = np.array([p[0] for p in pts])
    y = np.array([p[1] for p in pts])
    assume(len(np.unique(x)) >= 3)
    assert fit.b > -x.min()
    assert fit.residual >= 0
    rng = np.random.default_rng(0)
    for _ in range(20):
        a = fit.a + rng.normal(scale=0.1)
        c = fit.c + rng.normal(scale=0.1)
        rss = float(np.sum((a * np.log(x + fit.b) + c - y) ** 2))
        assert fit.residual <= rss + 1e-9 * (1 + rss)
    assert _linear_solve(x, y, fit.b)[2] == pytest.approx(fit.residual)


# --------------------------------------------------------------------------
# bootstrap
# --------------------------------------------------------------------------


def percentile_linear(values, q):
    v = sorted(values)
    pos = (len(v) - 1) * q / 100
    lo = math.floor(pos)
    hi = min(lo + 1, len(v) - 1)
    return v[lo] + (v[hi] - v[lo]) * (pos - lo)


def test_constant_scores():
    assert bootstrap_ci([0.7] * 9, 200, 0.95, 1) == (0.7, 0.7)


def test_interval_contains_mean_and_is_seeded():
    scores = [1, 0, 1, 1, 0, 1, 0, 1, 1, 1]
    lo, hi = bootstrap_ci(scores, 500, 0.95, 3)
    assert lo <= np.mean(scores) <= hi
    assert bootstrap_ci(scores, 500, 0.95, 3) == (lo, hi)


def test_exhaustive_matches_enumeration():
    scores = [0.0, 1.0, 1.0, 3.0]
    means = [sum(scores[i] for i in idx) / 4 for idx in itertools.product(range(4), repeat=4)]
    want = (percentile_linear(means, 2.5), percentile_linear(means, 97.5))
    got = bootstrap_ci(scores, level=0.95, exhaustive=True)
    assert got == pytest.approx(want, abs=1e-12)


def test_bootstrap_validation():
    with pytest.raises(ValueError):
        bootstrap_ci([], 10)
    with pytest.raises(ValueError):
        bootstrap_ci([1, 2], 10, level=1.0)
