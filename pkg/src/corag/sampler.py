"""Rejection sampling of retrieval chains and multi-task training-data emission."""

from __future__ import annotations

import hashlib
import logging
import random
from dataclasses import dataclass, field, replace
from typing import Any, Literal, Sequence

from corag.chain import (
    DEFAULT_FINAL_K,
    DEFAULT_STEP_K,
    RetrievalChain,
    advance,
    fetch_docs,
    final_prompt,
    new_chain,
    subanswer_prompt,
)
from corag.errors import CapabilityError, CoragError, DegenerateGenerationError, SamplingError
from corag.evaluation import exact_match
from corag.lm import LanguageModel
from corag.prompts import TaskDescription, render_stop_prompt, render_subquery_prompt
from corag.retrieval import Document, RankedList, Retriever
from corag.rng import derive_seed

logger = logging.getLogger(__name__)

DEFAULT_MAX_CHAINS = 16
DEFAULT_LENGTH_RANGE = (1, 5)
DEFAULT_SUBTASK_RATIO = 0.2
LIKELIHOOD_THRESHOLD = -0.05

TaskName = Literal["sub_query_prediction", "sub_answer_prediction", "final_answer_prediction", "stop_prediction"]


@dataclass(frozen=True)
class QAInstance:
    query: str
    answers: tuple[str, ...]
    dataset_id: str

    def __post_init__(self) -> None:
        object.__setattr__(self, "answers", tuple(self.answers))
        if not self.query.strip():
            raise ValueError("query must be non-empty")
        if not self.answers or not all(a.strip() for a in self.answers):
            raise ValueError("answers must be non-empty")

    @property
    def answer(self) -> str:
        """The gold answer used for likelihood scoring (the first one)."""
        return self.answers[0]

    @property
    def instance_id(self) -> str:
        return hashlib.sha1(f"{self.query}\x00{self.dataset_id}".encode("utf-8")).hexdigest()[:16]

    @classmethod
    def from_dict(cls, obj: dict[str, Any]) -> QAInstance:
        answers = obj.get("answers", obj.get("answer"))
        if isinstance(answers, str):
            answers = [answers]
        if not answers:
            raise ValueError("record has no answer(s)")
        return cls(str(obj["query"]), tuple(str(a) for a in answers), str(obj["dataset_id"]))


@dataclass(frozen=True)
class AugmentedInstance:
    qa: QAInstance
    chain: RetrievalChain
    final_docs: tuple[Document, ...]
    final_ranking: RankedList
    answer_logprob: float
    # gold-answer log-likelihood for each chain prefix 0..L
    prefix_logprobs: tuple[float, ...] = field(default=())


@dataclass(frozen=True)
class TrainingInstance:
    task: TaskName
    prompt: str
    target: str

    def __post_init__(self) -> None:
        if not self.target:
            raise ValueError("training target must be non-empty")
        if self.task == "stop_prediction" and self.target not in ("Yes", "No"):
            raise ValueError("stop_prediction target must be Yes or No")

    def to_dict(self) -> dict[str, str]:
        return {"task": self.task, "prompt": self.prompt, "target": self.target}


def draw_max_length(rng: random.Random, length_range: tuple[int, int]) -> int:
    lo, hi = length_range
    return rng.randint(lo, hi)


def gold_score(chain: RetrievalChain, qa: QAInstance, final_docs: Sequence[Document], lm: LanguageModel, n_steps: int | None = None):
    """Score the gold answer after the final-answer prompt for the first ``n_steps`` steps."""
    history = chain.history if n_steps is None else chain.history[:n_steps]
    return lm.score_continuation(final_prompt(chain, final_docs, history), qa.answer)


def sample_chains(
    qa: QAInstance,
    lm: LanguageModel,
    retriever: Retriever,
    max_chains: int = DEFAULT_MAX_CHAINS,
    length_range: tuple[int, int] = DEFAULT_LENGTH_RANGE,
    *,
    task: TaskDescription,
    seed: int = 0,
    subquery_temperature: float = 0.7,
    step_k: int = DEFAULT_STEP_K,
    final_k: int = DEFAULT_FINAL_K,
    final_docs: Sequence[Document] | None = None,
) -> list[RetrievalChain]:
    """Sample chains for one QA pair until one succeeds or ``max_chains`` is reached.

    Each chain draws its own maximum length from ``length_range``. A chain stops
    early when a sub-answer matches a gold answer, or when the average per-token
    log-likelihood of the gold answer (final-answer prompt, current history and
    the top ``final_k`` documents for the query) exceeds -0.05. Such a success
    also ends sampling for the instance. Chains hit by LM or retriever errors
    are dropped.
    """
    lo, hi = length_range
    if max_chains < 1:
        raise ValueError("max_chains must be >= 1")
    if not 1 <= lo <= hi:
        raise ValueError(f"invalid length range {length_range}")
    if final_docs is None:
        final_docs = fetch_docs(retriever, retriever.search(qa.query, final_k))
    rng = random.Random(derive_seed(seed, "lengths"))

    chains: list[RetrievalChain] = []
    errors: list[BaseException] = []
    for c in range(max_chains):
        max_len = draw_max_length(rng, length_range)
        chain = new_chain(qa.query, task, max_len)
        chain_seed = derive_seed(seed, "chain", c)
        try:
            while len(chain.steps) < max_len:
                try:
                    chain = advance(chain, lm, retriever, step_k, subquery_temperature, seed=chain_seed)
                except DegenerateGenerationError:
                    chain = replace(chain, termination="degenerate")
                    break
                if exact_match(chain.steps[-1].sub_answer, qa.answers):
                    chain = replace(chain, termination="answer_match")
                    break
                if gold_score(chain, qa, final_docs, lm).avg_logprob > LIKELIHOOD_THRESHOLD:
                    chain = replace(chain, termination="likelihood")
                    break
            else:
                chain = replace(chain, termination="max_length")
        except CapabilityError:
            raise
        except CoragError as exc:
            logger.warning("chain %d for %r aborted: %s", c, qa.query, exc)
            errors.append(exc)
            continue
        chains.append(chain)
        if chain.termination in ("answer_match", "likelihood"):
            break
    if not chains:
        raise SamplingError(f"no chain completed for {qa.query!r}: {errors}")
    return chains


def select_best_chain(
    candidates: Sequence[RetrievalChain],
    qa: QAInstance,
    lm: LanguageModel,
    retriever: Retriever | None = None,
    *,
    final_docs: Sequence[Document] | None = None,
    final_ranking: RankedList | None = None,
    final_k: int = DEFAULT_FINAL_K,
) -> AugmentedInstance:
    """Pick the candidate under which the gold answer is most likely.

    Ties go to the shorter chain, then the earlier candidate. The winner's
    prefix scores (0..L steps) are computed as well for stop-label emission;
    wrap ``lm`` in a :class:`~corag.lm.CachedScorer` to reuse earlier scores.
    """
    if not candidates:
        raise ValueError("no candidate chains to select from")
    if final_docs is None:
        if retriever is None:
            raise ValueError("need either final_docs or a retriever")
        final_ranking = retriever.search(qa.query, final_k)
        final_docs = fetch_docs(retriever, final_ranking)
    if final_ranking is None:
        final_ranking = RankedList(tuple((d.doc_id, 0.0) for d in final_docs))
    final_docs = tuple(final_docs)

    scores = [gold_score(c, qa, final_docs, lm).sum_logprob for c in candidates]
    best = max(range(len(candidates)), key=lambda i: (scores[i], -len(candidates[i].steps), -i))
    winner = replace(candidates[best], answer_logprob=scores[best])
    prefix = tuple(
        scores[best] if n == len(winner.steps) else gold_score(winner, qa, final_docs, lm, n).sum_logprob
        for n in range(len(winner.steps) + 1)
    )
    return AugmentedInstance(qa, winner, final_docs, final_ranking, scores[best], prefix)


def stop_labels(prefix_logprobs: Sequence[float]) -> list[str]:
    """Labels for prefixes 1..L: "Yes" once the chain contains the best-scoring prefix."""
    if not prefix_logprobs:
        return []
    best = max(range(len(prefix_logprobs)), key=lambda n: (prefix_logprobs[n], -n))
    return ["Yes" if n >= best else "No" for n in range(1, len(prefix_logprobs))]


def emit_training_instances(aug: AugmentedInstance, subtask_sample_ratio: float = DEFAULT_SUBTASK_RATIO, rng_seed: int = 0) -> list[TrainingInstance]:
    if not 0.0 <= subtask_sample_ratio <= 1.0:
        raise ValueError("subtask_sample_ratio must be within [0, 1]")
    chain, qa = aug.chain, aug.qa
    rng = random.Random(rng_seed)
    out: list[TrainingInstance] = []
    history = chain.history
    for i, step in enumerate(chain.steps):
        if rng.random() < subtask_sample_ratio:
            prompt = render_subquery_prompt(chain.query, history[:i], chain.task)
            out.append(TrainingInstance("sub_query_prediction", prompt, step.sub_query))
        if rng.random() < subtask_sample_ratio and step.sub_answer:
            out.append(TrainingInstance("sub_answer_prediction", subanswer_prompt(step.sub_query, step.docs), step.sub_answer))
    out.append(TrainingInstance("final_answer_prediction", final_prompt(chain, aug.final_docs), qa.answer))
    for n, label in enumerate(stop_labels(aug.prefix_logprobs), start=1):
        out.append(TrainingInstance("stop_prediction", render_stop_prompt(chain.query, history[:n]), label))
    return out
