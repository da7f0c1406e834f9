"""Chain-of-retrieval question answering: sampling, decoding and evaluation."""

from __future__ import annotations

__version__ = "0.1.0"

from corag.chain import ChainStep, RetrievalChain, advance, finalize, new_chain, run_chain, should_stop
from corag.decoding import DecodeConfig, DecodeOutcome, decode, decode_best_of_n, decode_greedy, decode_tree_search
from corag.evaluation import (
    LogLinearFit,
    ScorePoint,
    bootstrap_ci,
    exact_match,
    f1,
    fit_log_linear,
    normalize_answer,
    pareto_frontier,
    recall_at_k,
)
from corag.lm import (
    CachedScorer,
    CompletionRequest,
    CompletionResult,
    HttpCompletionBackend,
    LanguageModel,
    ScoreResult,
    ScriptedBackend,
)
from corag.prompts import (
    TaskDescription,
    get_task,
    render_final_prompt,
    render_stop_prompt,
    render_subanswer_prompt,
    render_subquery_prompt,
)
from corag.retrieval import BM25Index, Document, DocumentStore, HttpRetriever, RankedList, rrf_merge
from corag.sampler import QAInstance, emit_training_instances, sample_chains, select_best_chain
from corag.trace import RunTrace

__all__ = [
    "BM25Index",
    "CachedScorer",
    "ChainStep",
    "CompletionRequest",
    "CompletionResult",
    "DecodeConfig",
    "DecodeOutcome",
    "Document",
    "DocumentStore",
    "HttpCompletionBackend",
    "HttpRetriever",
    "LanguageModel",
    "LogLinearFit",
    "QAInstance",
    "RankedList",
    "RetrievalChain",
    "RunTrace",
    "ScorePoint",
    "ScoreResult",
    "ScriptedBackend",
    "TaskDescription",
    "advance",
    "bootstrap_ci",
    "decode",
    "decode_best_of_n",
    "decode_greedy",
    "decode_tree_search",
    "emit_training_instances",
    "exact_match",
    "f1",
    "finalize",
    "fit_log_linear",
    "get_task",
    "new_chain",
    "normalize_answer",
    "pareto_frontier",
    "recall_at_k",
    "render_final_prompt",
    "render_stop_prompt",
    "render_subanswer_prompt",
    "render_subquery_prompt",
    "rrf_merge",
    "run_chain",
    "sample_chains",
    "select_best_chain",
    "should_stop",
]
