"""Test-time decoding: greedy, best-of-N with penalty selection, and tree search."""

from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass, field, fields, replace
from typing import Any, Literal, Mapping

from corag.chain import (
    DEFAULT_FINAL_K,
    DEFAULT_STEP_K,
    RetrievalChain,
    advance,
    finalize,
    new_chain,
    run_chain,
    should_stop,
    subanswer_prompt,
)
from corag.errors import CapabilityError, CoragError, DecodeError, DegenerateGenerationError
from corag.lm import LanguageModel
from corag.prompts import NO_INFO_ANSWER, TaskDescription
from corag.retrieval import Retriever
from corag.rng import derive_seed
from corag.trace import RunTrace

logger = logging.getLogger(__name__)

Strategy = Literal["greedy", "best_of_n", "tree_search"]
STRATEGIES = ("greedy", "best_of_n", "tree_search")


@dataclass(frozen=True)
class DecodeConfig:
    strategy: Strategy = "greedy"
    max_length_L: int = 6
    n_chains_N: int = 4
    subquery_temperature: float = 0.7
    expansion_size: int = 4
    n_rollouts: int = 2
    rollout_depth: int = 2
    stop_bias: float | None = None
    seed: int = 0
    step_k: int = DEFAULT_STEP_K
    final_k: int = DEFAULT_FINAL_K

    def __post_init__(self) -> None:
        if self.strategy not in STRATEGIES:
            raise ValueError(f"unknown strategy {self.strategy!r}; expected one of {STRATEGIES}")
        if self.max_length_L < 0:
            raise ValueError("max_length_L must be >= 0")
        if self.n_chains_N < 1:
            raise ValueError("n_chains_N must be >= 1")
        if self.subquery_temperature < 0:
            raise ValueError("subquery_temperature must be >= 0")
        # expansion_size 1 / rollout_depth 0 are accepted: they collapse tree search to greedy
        if self.expansion_size < 1 or self.n_rollouts < 1 or self.rollout_depth < 0:
            raise ValueError("expansion_size and n_rollouts must be >= 1, rollout_depth >= 0")
        if self.step_k < 1 or self.final_k < 1:
            raise ValueError("step_k and final_k must be >= 1")

    @property
    def effective_n(self) -> int:
        return 1 if self.strategy == "greedy" else self.n_chains_N

    @property
    def effective_temperature(self) -> float:
        return 0.0 if self.strategy == "greedy" else self.subquery_temperature

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)

    @classmethod
    def from_dict(cls, obj: Mapping[str, Any]) -> DecodeConfig:
        known = {f.name for f in fields(cls)}
        unknown = set(obj) - known
        if unknown:
            raise ValueError(f"unknown decode config keys: {sorted(unknown)}")
        return cls(**obj)


@dataclass
class DecodeOutcome:
    chain: RetrievalChain
    all_candidates: list[RetrievalChain] = field(default_factory=list)
    trace: RunTrace = field(default_factory=RunTrace)


def chain_penalty(chain: RetrievalChain, lm: LanguageModel) -> float:
    """Mean log-likelihood of the no-information answer over the chain's sub-answer prompts.

    Closer to zero means the chain's retrievals were less useful.
    """
    if not chain.steps:
        raise ValueError("penalty is undefined for a chain without steps")
    per_step = [
        lm.score_continuation(subanswer_prompt(s.sub_query, s.docs), NO_INFO_ANSWER).sum_logprob
        for s in chain.steps
    ]
    return math.fsum(per_step) / len(per_step)


def _penalty_or_worst(chain: RetrievalChain, lm: LanguageModel) -> float:
    # a chain that never completed a step gathered no evidence: rank it last
    return chain_penalty(chain, lm) if chain.steps else 0.0


def _argmin(values: list[float]) -> int:
    best = min(values)
    return values.index(best)


def decode_greedy(
    query: str,
    task: TaskDescription,
    config: DecodeConfig,
    lm: LanguageModel,
    retriever: Retriever,
) -> DecodeOutcome:
    if config.strategy != "greedy":
        raise ValueError(f"decode_greedy called with strategy {config.strategy!r}")
    trace = RunTrace()
    mlm, mret = trace.wrap_lm(lm), trace.wrap_retriever(retriever)
    chain = run_chain(
        new_chain(query, task, config.max_length_L),
        mlm,
        mret,
        config.max_length_L,
        step_k=config.step_k,
        temperature=0.0,
        seed=derive_seed(config.seed, 0),
        stop_bias=config.stop_bias,
    )
    chain = finalize(chain, mlm, mret, config.final_k)
    return DecodeOutcome(chain, [], trace)


def decode_best_of_n(
    query: str,
    task: TaskDescription,
    config: DecodeConfig,
    lm: LanguageModel,
    retriever: Retriever,
) -> DecodeOutcome:
    """Sample N chains, keep the one with the lowest penalty, finalize only the winner."""
    if config.strategy != "best_of_n":
        raise ValueError(f"decode_best_of_n called with strategy {config.strategy!r}")
    trace = RunTrace()
    mlm, mret = trace.wrap_lm(lm), trace.wrap_retriever(retriever)

    candidates: list[RetrievalChain] = []
    failures: list[BaseException] = []
    for i in range(config.n_chains_N):
        try:
            chain = run_chain(
                new_chain(query, task, config.max_length_L),
                mlm,
                mret,
                config.max_length_L,
                step_k=config.step_k,
                temperature=config.subquery_temperature,
                seed=derive_seed(config.seed, i),
                stop_bias=config.stop_bias,
            )
        except CapabilityError:
            raise
        except CoragError as exc:
            logger.warning("candidate %d failed: %s", i, exc)
            failures.append(exc)
            continue
        candidates.append(chain)
    if not candidates:
        raise DecodeError(failures)

    # with a single candidate or no steps anywhere there is nothing to rank
    if len(candidates) > 1 and any(c.steps for c in candidates):
        with trace.phase("penalty"):
            penalties = [_penalty_or_worst(c, mlm) for c in candidates]
        candidates = [replace(c, penalty=p) for c, p in zip(candidates, penalties)]
        winner = candidates[_argmin(penalties)]
    else:
        winner = candidates[0]
    final = finalize(winner, mlm, mret, config.final_k)
    return DecodeOutcome(final, candidates, trace)


def expected_tree_rounds(config: DecodeConfig, depth: int) -> int:
    """Sub-query/sub-answer rounds tree search spends at ``depth`` (1-based) with no degeneration."""
    if config.expansion_size == 1:
        return 1
    remaining = config.max_length_L - depth
    return config.expansion_size * (1 + config.n_rollouts * max(0, min(config.rollout_depth, remaining)))


def decode_tree_search(
    query: str,
    task: TaskDescription,
    config: DecodeConfig,
    lm: LanguageModel,
    retriever: Retriever,
) -> DecodeOutcome:
    """Breadth-first search with rollouts.

    At each depth the retained chain is expanded by ``expansion_size`` sampled
    sub-queries; each expansion is scored by the mean penalty of
    ``n_rollouts`` sampled continuations of at most ``rollout_depth`` steps
    (capped by the remaining length budget). The expansion with the lowest mean
    is retained. Trace events are tagged with phase ``depth:<d>``.
    """
    if config.strategy != "tree_search":
        raise ValueError(f"decode_tree_search called with strategy {config.strategy!r}")
    trace = RunTrace()
    mlm, mret = trace.wrap_lm(lm), trace.wrap_retriever(retriever)
    temp = config.subquery_temperature
    state = new_chain(query, task, config.max_length_L)
    expansions_seen: list[RetrievalChain] = []

    for depth in range(1, config.max_length_L + 1):
        with trace.phase(f"depth:{depth}"):
            expansions: list[RetrievalChain] = []
            for e in range(config.expansion_size):
                try:
                    child = advance(
                        state,
                        mlm,
                        mret,
                        config.step_k,
                        temp,
                        seed=derive_seed(config.seed, "expand", depth, e),
                        avoid=[c.steps[-1].sub_query for c in expansions],
                    )
                except DegenerateGenerationError:
                    continue
                expansions.append(child)
            if not expansions:
                trace.record("warning:all_expansions_degenerate")
                state = replace(state, termination="degenerate")
                break

            if config.expansion_size == 1:
                state = expansions[0]
            else:
                remaining = config.max_length_L - depth
                means = []
                for e, child in enumerate(expansions):
                    scores = []
                    for r in range(config.n_rollouts):
                        roll = run_chain(
                            child,
                            mlm,
                            mret,
                            min(config.rollout_depth, remaining),
                            step_k=config.step_k,
                            temperature=temp,
                            seed=derive_seed(config.seed, "rollout", depth, e, r),
                        )
                        scores.append(chain_penalty(roll, mlm))
                    means.append(math.fsum(scores) / len(scores))
                scored = [replace(c, penalty=m) for c, m in zip(expansions, means)]
                expansions_seen.extend(scored)
                state = scored[_argmin(means)]

            if config.stop_bias is not None and depth < config.max_length_L:
                if should_stop(state, mlm, config.stop_bias):
                    state = replace(state, termination="stop_predicted")
                    break

    if state.termination is None:
        state = replace(state, termination="max_length")
    final = finalize(state, mlm, mret, config.final_k)
    return DecodeOutcome(final, expansions_seen, trace)


def decode(query: str, task: TaskDescription, config: DecodeConfig, lm: LanguageModel, retriever: Retriever) -> DecodeOutcome:
    if config.strategy == "greedy":
        return decode_greedy(query, task, config, lm, retriever)
    if config.strategy == "best_of_n":
        return decode_best_of_n(query, task, config, lm, retriever)
    return decode_tree_search(query, task, config, lm, retriever)
