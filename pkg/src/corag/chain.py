"""Retrieval-chain state and the step / stop / finalize actions on it.

Chains are immutable; every action returns a new chain. Callers that want
token accounting pass LM and retriever objects wrapped by a ``RunTrace``.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, replace
from typing import Any, Callable, Iterable, Sequence

from corag.errors import ChainFrozenError, ChainLengthError, DegenerateGenerationError
from corag.lm import CompletionRequest, LanguageModel
from corag.prompts import (
    TaskDescription,
    render_final_prompt,
    render_stop_prompt,
    render_subanswer_prompt,
    render_subquery_prompt,
)
from corag.retrieval import Document, RankedList, Retriever
from corag.rng import derive_seed

logger = logging.getLogger(__name__)

DEFAULT_STEP_K = 5
DEFAULT_FINAL_K = 20
DUPLICATE_RETRY_BUDGET = 3
SUBQUERY_MAX_TOKENS = 64
ANSWER_MAX_TOKENS = 128
STOP_TOKENS = frozenset({"Yes", "No"})


@dataclass(frozen=True)
class ChainStep:
    sub_query: str
    retrieved: RankedList
    docs: tuple[Document, ...]
    sub_answer: str

    def __post_init__(self) -> None:
        if not self.sub_query:
            raise ValueError("sub_query must be non-empty")


@dataclass(frozen=True)
class RetrievalChain:
    query: str
    task: TaskDescription
    steps: tuple[ChainStep, ...] = ()
    max_length: int | None = None
    final_answer: str | None = None
    final_retrieved: RankedList | None = None
    final_docs: tuple[Document, ...] = ()
    penalty: float | None = None
    answer_logprob: float | None = None
    termination: str | None = None

    def __post_init__(self) -> None:
        if self.max_length is not None and len(self.steps) > self.max_length:
            raise ChainLengthError(f"chain has {len(self.steps)} steps, limit {self.max_length}")
        sub_queries = [s.sub_query for s in self.steps]
        if len(set(sub_queries)) != len(sub_queries):
            raise ValueError("duplicate sub-queries within one chain")

    @property
    def frozen(self) -> bool:
        return self.final_answer is not None

    @property
    def history(self) -> list[tuple[str, str]]:
        return [(s.sub_query, s.sub_answer) for s in self.steps]

    @property
    def sub_queries(self) -> list[str]:
        return [s.sub_query for s in self.steps]

    def prefix(self, n: int) -> RetrievalChain:
        return replace(self, steps=self.steps[:n], final_answer=None, penalty=None, answer_logprob=None)


def new_chain(query: str, task: TaskDescription, max_length: int | None = None) -> RetrievalChain:
    return RetrievalChain(query=query, task=task, max_length=max_length)


def fetch_docs(retriever: Retriever, ranking: RankedList) -> tuple[Document, ...]:
    return tuple(retriever.get(doc_id) for doc_id in ranking.doc_ids)


def subanswer_prompt(sub_query: str, docs: Sequence[Document]) -> str:
    """The sub-answer prompt exactly as the engine renders it (empty docs allowed)."""
    return render_subanswer_prompt(sub_query, docs, allow_empty=True)


def final_prompt(chain: RetrievalChain, docs: Sequence[Document], history: Sequence[tuple[str, str]] | None = None) -> str:
    hist = chain.history if history is None else history
    return render_final_prompt(chain.query, hist, docs, chain.task, allow_empty=True)


def advance(
    chain: RetrievalChain,
    lm: LanguageModel,
    retriever: Retriever,
    step_k: int = DEFAULT_STEP_K,
    subquery_temperature: float = 0.7,
    *,
    seed: int = 0,
    retry_budget: int = DUPLICATE_RETRY_BUDGET,
    avoid: Iterable[str] = (),
) -> RetrievalChain:
    """Append one (sub-query, retrieval, sub-answer) step.

    A sub-query identical to an earlier one (or to anything in ``avoid``) is
    discarded and regenerated with a fresh seed, up to ``retry_budget`` times.
    At temperature 0 generation is deterministic, so no regeneration is tried.
    """
    if chain.frozen:
        raise ChainFrozenError()
    if chain.max_length is not None and len(chain.steps) >= chain.max_length:
        raise ChainLengthError(f"chain already has {len(chain.steps)} of {chain.max_length} steps")
    if step_k < 1:
        raise ValueError("step_k must be positive")

    taken = set(chain.sub_queries) | set(avoid)
    prompt = render_subquery_prompt(chain.query, chain.history, chain.task)
    attempts = 1 + (retry_budget if subquery_temperature > 0 else 0)
    sub_query = ""
    for attempt in range(attempts):
        result = lm.generate(
            CompletionRequest(
                prompt,
                temperature=subquery_temperature,
                max_new_tokens=SUBQUERY_MAX_TOKENS,
                stop_sequences=("\n",),
                seed=derive_seed(seed, len(chain.steps), attempt),
                tag="sub_query",
            )
        )
        sub_query = result.text.strip()
        if sub_query and sub_query not in taken:
            break
    else:
        raise DegenerateGenerationError(sub_query, attempts)

    ranking = retriever.search(sub_query, step_k)
    docs = fetch_docs(retriever, ranking)
    answer = lm.generate(
        CompletionRequest(
            subanswer_prompt(sub_query, docs),
            temperature=0.0,
            max_new_tokens=ANSWER_MAX_TOKENS,
            tag="sub_answer",
        )
    )
    step = ChainStep(sub_query, ranking, docs, answer.text.strip())
    return replace(chain, steps=chain.steps + (step,))


def finalize(
    chain: RetrievalChain,
    lm: LanguageModel,
    retriever: Retriever,
    final_k: int = DEFAULT_FINAL_K,
) -> RetrievalChain:
    """Retrieve for the original query and generate the final answer, freezing the chain."""
    if chain.frozen:
        raise ChainFrozenError()
    ranking = retriever.search(chain.query, final_k)
    docs = fetch_docs(retriever, ranking)
    result = lm.generate(
        CompletionRequest(
            final_prompt(chain, docs),
            temperature=0.0,
            max_new_tokens=ANSWER_MAX_TOKENS,
            tag="final_answer",
        )
    )
    return replace(chain, final_answer=result.text.strip(), final_retrieved=ranking, final_docs=docs)


def should_stop(chain: RetrievalChain, lm: LanguageModel, yes_logit_bias: float = 0.0) -> bool:
    """Ask the model whether the gathered information suffices (constrained Yes/No)."""
    if chain.frozen:
        raise ChainFrozenError()
    result = lm.generate(
        CompletionRequest(
            render_stop_prompt(chain.query, chain.history),
            temperature=0.0,
            max_new_tokens=1,
            logit_bias={"Yes": yes_logit_bias},
            allowed_tokens=STOP_TOKENS,
            tag="stop",
        )
    )
    return result.text.strip() == "Yes"


def run_chain(
    chain: RetrievalChain,
    lm: LanguageModel,
    retriever: Retriever,
    n_steps: int,
    *,
    step_k: int = DEFAULT_STEP_K,
    temperature: float = 0.0,
    seed: int = 0,
    stop_bias: float | None = None,
    on_step: Callable[[RetrievalChain], bool] | None = None,
) -> RetrievalChain:
    """Advance up to ``n_steps`` times.

    Stops early when a step degenerates (the chain is returned as is), when the
    stop predictor says "Yes" (only if ``stop_bias`` is set), or when ``on_step``
    returns True. ``termination`` records which of these ended the loop.
    """
    for i in range(n_steps):
        try:
            chain = advance(chain, lm, retriever, step_k, temperature, seed=seed)
        except DegenerateGenerationError as exc:
            logger.debug("step aborted: %s", exc)
            return replace(chain, termination="degenerate")
        if on_step is not None and on_step(chain):
            return chain
        # no stop check after the last allowed step: finalizing follows anyway
        last = i == n_steps - 1
        if stop_bias is not None and not last and should_stop(chain, lm, stop_bias):
            return replace(chain, termination="stop_predicted")
    return chain if chain.termination else replace(chain, termination="max_length")


# --------------------------------------------------------------------------
# persistence
# --------------------------------------------------------------------------


def _ranking_to_dict(ranking: RankedList) -> dict:
    return {"doc_ids": ranking.doc_ids, "doc_scores": [s for _, s in ranking]}


def chain_to_dict(chain: RetrievalChain, trace: Any = None) -> dict:
    out: dict[str, Any] = {
        "query": chain.query,
        "task": {"dataset_id": chain.task.dataset_id, "description": chain.task.description},
        "steps": [
            {"sub_query": s.sub_query, "sub_answer": s.sub_answer, **_ranking_to_dict(s.retrieved)}
            for s in chain.steps
        ],
        "final_answer": chain.final_answer,
        "penalty": chain.penalty,
        "answer_logprob": chain.answer_logprob,
        "max_length": chain.max_length,
        "termination": chain.termination,
    }
    if chain.final_retrieved is not None:
        out["final_doc_ids"] = chain.final_retrieved.doc_ids
        out["final_doc_scores"] = [s for _, s in chain.final_retrieved]
    if trace is not None:
        out["trace"] = trace.counters()
    return out


def chain_from_dict(obj: dict, lookup: Callable[[str], Document]) -> RetrievalChain:
    steps = []
    for s in obj["steps"]:
        scores = s.get("doc_scores") or [0.0] * len(s["doc_ids"])
        ranking = RankedList(tuple(zip(s["doc_ids"], scores)))
        steps.append(ChainStep(s["sub_query"], ranking, tuple(lookup(d) for d in s["doc_ids"]), s["sub_answer"]))
    final_retrieved = None
    final_docs: tuple[Document, ...] = ()
    if "final_doc_ids" in obj:
        ids = obj["final_doc_ids"]
        scores = obj.get("final_doc_scores") or [0.0] * len(ids)
        final_retrieved = RankedList(tuple(zip(ids, scores)))
        final_docs = tuple(lookup(d) for d in ids)
    task = obj["task"]
    return RetrievalChain(
        query=obj["query"],
        task=TaskDescription(task["dataset_id"], task["description"]),
        steps=tuple(steps),
        max_length=obj.get("max_length"),
        final_answer=obj.get("final_answer"),
        final_retrieved=final_retrieved,
        final_docs=final_docs,
        penalty=obj.get("penalty"),
        answer_logprob=obj.get("answer_logprob"),
        termination=obj.get("termination"),
    )
