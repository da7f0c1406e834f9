"""Per-run accounting of LM tokens and retriever calls."""

from __future__ import annotations

import threading
import time
from contextlib import contextmanager
from dataclasses import dataclass, field
from typing import Iterator

from corag.lm import CompletionRequest, CompletionResult, LanguageModel, ScoreResult
from corag.retrieval import Document, RankedList, Retriever


@dataclass(frozen=True)
class TraceEvent:
    operation: str
    prompt_tokens: int = 0
    generated_tokens: int = 0
    phase: str = ""
    # wall time is informational and excluded from equality
    duration: float = field(default=0.0, compare=False)


class RunTrace:
    """Append-only, thread-safe event log with running counters."""

    def __init__(self) -> None:
        self._lock = threading.Lock()
        self._events: list[TraceEvent] = []
        self._phase = ""
        self.prompt_tokens = 0
        self.generated_tokens = 0
        self.retriever_calls = 0

    def record(self, operation: str, prompt_tokens: int = 0, generated_tokens: int = 0, duration: float = 0.0) -> None:
        with self._lock:
            event = TraceEvent(operation, prompt_tokens, generated_tokens, self._phase, duration)
            self._events.append(event)
            self.prompt_tokens += prompt_tokens
            self.generated_tokens += generated_tokens
            if operation == "retrieve":
                self.retriever_calls += 1

    @property
    def events(self) -> tuple[TraceEvent, ...]:
        with self._lock:
            return tuple(self._events)

    @property
    def total_tokens(self) -> int:
        return self.prompt_tokens + self.generated_tokens

    @contextmanager
    def phase(self, name: str) -> Iterator[None]:
        previous, self._phase = self._phase, name
        try:
            yield
        finally:
            self._phase = previous

    def counters(self) -> dict[str, int]:
        return {
            "prompt_tokens": self.prompt_tokens,
            "generated_tokens": self.generated_tokens,
            "retriever_calls": self.retriever_calls,
        }

    def signature(self) -> tuple[tuple[str, int, int, str], ...]:
        """Events without timings, for equality checks across runs."""
        return tuple((e.operation, e.prompt_tokens, e.generated_tokens, e.phase) for e in self.events)

    def wrap_lm(self, lm: LanguageModel) -> MeteredLM:
        return MeteredLM(lm, self)

    def wrap_retriever(self, retriever: Retriever) -> MeteredRetriever:
        return MeteredRetriever(retriever, self)


class MeteredLM:
    """Language model view that charges every call to a :class:`RunTrace`."""

    def __init__(self, lm: LanguageModel, trace: RunTrace):
        self.lm = lm
        self.trace = trace

    def generate(self, request: CompletionRequest) -> CompletionResult:
        start = time.perf_counter()
        result = self.lm.generate(request)
        op = f"generate:{request.tag}" if request.tag else "generate"
        self.trace.record(op, result.prompt_tokens, result.generated_tokens, time.perf_counter() - start)
        return result

    def score_continuation(self, prompt: str, continuation: str) -> ScoreResult:
        start = time.perf_counter()
        result = self.lm.score_continuation(prompt, continuation)
        self.trace.record("score", result.prompt_tokens, result.generated_tokens, time.perf_counter() - start)
        return result


class MeteredRetriever:
    def __init__(self, retriever: Retriever, trace: RunTrace):
        self.retriever = retriever
        self.trace = trace

    def search(self, query: str, k: int) -> RankedList:
        start = time.perf_counter()
        result = self.retriever.search(query, k)
        self.trace.record("retrieve", duration=time.perf_counter() - start)
        return result

    def get(self, doc_id: str) -> Document:
        return self.retriever.get(doc_id)


class TokenLedger:
    """Thread-safe registry of run traces keyed by run id."""

    def __init__(self) -> None:
        self._lock = threading.Lock()
        self._traces: dict[str, RunTrace] = {}

    def trace(self, run_id: str) -> RunTrace:
        with self._lock:
            return self._traces.setdefault(run_id, RunTrace())

    def __contains__(self, run_id: object) -> bool:
        return run_id in self._traces

    def totals(self) -> dict[str, int]:
        with self._lock:
            traces = list(self._traces.values())
        return {
            "prompt_tokens": sum(t.prompt_tokens for t in traces),
            "generated_tokens": sum(t.generated_tokens for t in traces),
            "retriever_calls": sum(t.retriever_calls for t in traces),
        }
