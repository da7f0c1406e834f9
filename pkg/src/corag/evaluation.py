"""Answer metrics, retrieval recall and compute/quality analysis."""

from __future__ import annotations

import itertools
import math
import re
import string
from collections import Counter
from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

import numpy as np
from scipy.optimize import minimize_scalar

from corag.retrieval import Document, RankedList

B_MAX = 1e7
B_EPS = 1e-6

_ARTICLES_RE = re.compile(r"\b(a|an|the)\b")
_PUNCT = set(string.punctuation)


def normalize_answer(text: str) -> str:
    """Lowercase, drop punctuation and articles, collapse whitespace."""
    text = text.lower()
    text = "".join(ch for ch in text if ch not in _PUNCT)
    text = _ARTICLES_RE.sub(" ", text)
    return " ".join(text.split())


def _as_golds(golds: str | Iterable[str]) -> list[str]:
    return [golds] if isinstance(golds, str) else list(golds)


def exact_match(pred: str, golds: str | Iterable[str]) -> int:
    p = normalize_answer(pred)
    return int(any(p == normalize_answer(g) for g in _as_golds(golds)))


def _f1_single(pred: str, gold: str) -> float:
    p_toks = normalize_answer(pred).split()
    g_toks = normalize_answer(gold).split()
    if not p_toks and not g_toks:
        return 1.0
    if not p_toks or not g_toks:
        return 0.0
    overlap = sum((Counter(p_toks) & Counter(g_toks)).values())
    if overlap == 0:
        return 0.0
    precision = overlap / len(p_toks)
    recall = overlap / len(g_toks)
    return 2 * precision * recall / (precision + recall)


def f1(pred: str, golds: str | Iterable[str]) -> float:
    scores = [_f1_single(pred, g) for g in _as_golds(golds)]
    return max(scores) if scores else 0.0


def recall_at_k(
    fused: RankedList,
    golds: str | Iterable[str],
    corpus: Mapping[str, Document] | object,
    k: int,
) -> int:
    """1 iff one of the top-k documents' normalized text contains a normalized gold answer."""
    if k < 1:
        raise ValueError("k must be positive")
    lookup = corpus.get if hasattr(corpus, "get") else corpus.__getitem__  # type: ignore[attr-defined]
    needles = [n for n in (normalize_answer(g) for g in _as_golds(golds)) if n]
    if not needles:
        return 0
    for doc_id in fused.doc_ids[:k]:
        hay = normalize_answer(lookup(doc_id).text)
        if any(n in hay for n in needles):
            return 1
    return 0


# --------------------------------------------------------------------------
# compute / quality trade-off
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class ScorePoint:
    avg_tokens: float
    metric_value: float
    label: str = ""

    def __post_init__(self) -> None:
        if not self.avg_tokens > 0:
            raise ValueError("avg_tokens must be positive")


def dominates(q: ScorePoint, p: ScorePoint) -> bool:
    """q is at least as good on both axes and strictly better on one."""
    return (q.metric_value > p.metric_value and q.avg_tokens <= p.avg_tokens) or (
        q.metric_value >= p.metric_value and q.avg_tokens < p.avg_tokens
    )


def pareto_frontier(points: Sequence[ScorePoint]) -> list[ScorePoint]:
    """Non-dominated points sorted by avg_tokens (exact duplicates are all kept)."""
    ordered = sorted(points, key=lambda p: (p.avg_tokens, -p.metric_value))
    frontier: list[ScorePoint] = []
    best = -math.inf
    i = 0
    while i < len(ordered):
        # points sharing one token count: only the best metric among them can survive
        j = i
        while j < len(ordered) and ordered[j].avg_tokens == ordered[i].avg_tokens:
            j += 1
        top = ordered[i].metric_value
        if top > best:
            frontier.extend(p for p in ordered[i:j] if p.metric_value == top)
            best = top
        i = j
    return frontier


@dataclass(frozen=True)
class LogLinearFit:
    """y = a * log(x + b) + c"""

    a: float
    b: float
    c: float
    residual: float

    def predict(self, x: float | np.ndarray) -> float | np.ndarray:
        return self.a * np.log(np.asarray(x) + self.b) + self.c


def _linear_solve(x: np.ndarray, y: np.ndarray, b: float) -> tuple[float, float, float]:
    design = np.column_stack([np.log(x + b), np.ones_like(x)])
    coef, *_ = np.linalg.lstsq(design, y, rcond=None)
    resid = float(np.sum((design @ coef - y) ** 2))
    return float(coef[0]), float(coef[1]), resid


def fit_log_linear(
    points: Sequence[ScorePoint] | Sequence[tuple[float, float]],
    b_max: float = B_MAX,
    eps: float = B_EPS,
) -> LogLinearFit:
    """Least-squares fit of ``a * log(x + b) + c``.

    For a fixed ``b`` the model is linear in ``(a, c)`` and solved exactly; ``b``
    is found by a log-spaced grid over ``(-min(x) + eps, b_max]`` followed by a
    bounded Brent refinement around the best grid cell.
    """
    xs, ys = [], []
    for p in points:
        if isinstance(p, ScorePoint):
            xs.append(p.avg_tokens)
            ys.append(p.metric_value)
        else:
            xs.append(float(p[0]))
            ys.append(float(p[1]))
    x = np.asarray(xs, dtype=float)
    y = np.asarray(ys, dtype=float)
    if len(np.unique(x)) < 3:
        raise ValueError("log-linear fit needs at least 3 points with distinct x")

    x_min = float(x.min())
    # search over u = log(b + x_min), so b + x_min ranges over [eps, b_max + x_min]
    lo, hi = math.log(eps), math.log(b_max + x_min)

    def rss(u: float) -> float:
        return _linear_solve(x, y, math.exp(u) - x_min)[2]

    grid = np.linspace(lo, hi, 801)
    values = np.array([rss(u) for u in grid])
    i = int(np.argmin(values))
    left, right = grid[max(i - 1, 0)], grid[min(i + 1, len(grid) - 1)]
    best_u, best_val = float(grid[i]), float(values[i])
    if right > left:
        res = minimize_scalar(rss, bounds=(left, right), method="bounded", options={"xatol": 1e-12, "maxiter": 500})
        if res.fun <= best_val:
            best_u, best_val = float(res.x), float(res.fun)
    b = math.exp(best_u) - x_min
    a, c, resid = _linear_solve(x, y, b)
    return LogLinearFit(a, b, c, resid)


# --------------------------------------------------------------------------
# bootstrap
# --------------------------------------------------------------------------


def bootstrap_ci(
    per_instance_scores: Sequence[float],
    n_resamples: int = 1000,
    level: float = 0.95,
    seed: int = 0,
    *,
    exhaustive: bool = False,
) -> tuple[float, float]:
    """Percentile bootstrap interval for the mean.

    With ``exhaustive=True`` every one of the n**n ordered resamples is used
    instead of random draws (only sensible for tiny inputs).
    """
    scores = np.asarray(per_instance_scores, dtype=float)
    n = len(scores)
    if n == 0:
        raise ValueError("bootstrap needs at least one score")
    if not 0 < level < 1:
        raise ValueError("level must be in (0, 1)")
    if np.all(scores == scores[0]):
        return float(scores[0]), float(scores[0])
    if exhaustive:
        means = np.array([scores[list(idx)].mean() for idx in itertools.product(range(n), repeat=n)])
    else:
        if n_resamples < 1:
            raise ValueError("n_resamples must be positive")
        rng = np.random.default_rng(seed)
        idx = rng.integers(0, n, size=(n_resamples, n))
        means = scores[idx].mean(axis=1)
    alpha = (1.0 - level) / 2.0
    low, high = np.percentile(means, [100 * alpha, 100 * (1 - alpha)])
    return float(low), float(high)
