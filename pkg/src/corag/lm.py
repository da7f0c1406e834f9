"""Language-model gateway: request/result types and backends.

Two backends share one contract:

* :class:`ScriptedBackend` -- deterministic rule tables used as a test oracle.
  Tokens are whitespace-separated words.
* :class:`HttpCompletionBackend` -- a completions-style HTTP endpoint
  (``/completions`` with ``echo``/``logprobs`` for continuation scoring).
"""

from __future__ import annotations

import json
import logging
import math
import random
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping, Protocol, Sequence

import httpx

from corag.errors import CapabilityError, GatewayError, TransportFailure
from corag.rng import derive_seed

logger = logging.getLogger(__name__)

UNMENTIONED_LOGIT = -10.0
MAX_HTTP_BIAS = 100.0


@dataclass(frozen=True)
class CompletionRequest:
    prompt: str
    temperature: float = 0.0
    max_new_tokens: int = 64
    stop_sequences: tuple[str, ...] = ()
    logit_bias: Mapping[str, float] = field(default_factory=dict)
    allowed_tokens: frozenset[str] | None = None
    seed: int | None = None
    # bookkeeping label for traces; never sent to a backend
    tag: str = ""

    def __post_init__(self) -> None:
        if self.temperature < 0:
            raise ValueError("temperature must be >= 0")
        if self.max_new_tokens < 1:
            raise ValueError("max_new_tokens must be positive")
        if self.allowed_tokens is not None:
            object.__setattr__(self, "allowed_tokens", frozenset(self.allowed_tokens))
            if not self.allowed_tokens:
                raise ValueError("allowed_tokens must be non-empty when given")
        object.__setattr__(self, "stop_sequences", tuple(self.stop_sequences))


@dataclass(frozen=True)
class CompletionResult:
    text: str
    prompt_tokens: int
    generated_tokens: int


@dataclass(frozen=True)
class ScoreResult:
    token_logprobs: tuple[float, ...]
    sum_logprob: float
    avg_logprob: float
    prompt_tokens: int = 0
    generated_tokens: int = 0

    @classmethod
    def from_logprobs(cls, logprobs: Sequence[float], prompt_tokens: int = 0, generated_tokens: int = 0) -> ScoreResult:
        if not logprobs:
            raise ValueError("cannot score an empty continuation")
        lps = tuple(float(x) for x in logprobs)
        total = math.fsum(lps)
        return cls(lps, total, total / len(lps), prompt_tokens, generated_tokens)


class LanguageModel(Protocol):
    def generate(self, request: CompletionRequest) -> CompletionResult: ...

    def score_continuation(self, prompt: str, continuation: str) -> ScoreResult: ...


def truncate_at_stop(text: str, stops: Sequence[str]) -> str:
    cut = len(text)
    for s in stops:
        if s:
            pos = text.find(s)
            if pos != -1:
                cut = min(cut, pos)
    return text[:cut]


# --------------------------------------------------------------------------
# scripted backend
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class Choice:
    text: str
    logit: float = 0.0
    logprobs: float | tuple[float, ...] | None = None

    def token_logprobs(self, n_tokens: int) -> list[float]:
        return _expand_logprobs(self.logprobs, n_tokens, self.text)


def _expand_logprobs(lp_value: float | tuple[float, ...] | None, n_tokens: int, what: str) -> list[float]:
    if lp_value is None:
        raise ValueError(f"no logprob assignment for {what!r}")
    if isinstance(lp_value, tuple):
        if len(lp_value) != n_tokens:
            raise ValueError(f"{what!r}: {len(lp_value)} logprobs given for {n_tokens} tokens")
        return list(lp_value)
    return [float(lp_value)] * n_tokens


def _logprob_value(obj: Mapping[str, Any]) -> float | tuple[float, ...] | None:
    if "per_token_logprob_list" in obj:
        lp_value: float | tuple[float, ...] = tuple(float(x) for x in obj["per_token_logprob_list"])
        values = lp_value
    elif "per_token_logprob" in obj:
        lp_value = float(obj["per_token_logprob"])
        values = (lp_value,)
    else:
        return None
    if any(v > 0 for v in values):
        raise ValueError("log-probabilities must be <= 0")
    return lp_value


@dataclass(frozen=True)
class Rule:
    """One scripted behaviour, keyed on prompt substrings.

    A rule with an empty ``match`` list is the default and matches every prompt.
    A rule with ``continuation`` set only answers scoring calls for that exact
    continuation; otherwise it answers generation with one of ``choices``
    (argmax at temperature 0, softmax sampling above) and scores any
    continuation equal to a choice's text with that choice's logprobs.
    """

    match: tuple[str, ...]
    choices: tuple[Choice, ...] = ()
    continuation: str | None = None
    logprobs: float | tuple[float, ...] | None = None

    @property
    def is_default(self) -> bool:
        return not self.match

    def matches(self, prompt: str) -> bool:
        return all(s in prompt for s in self.match)

    @classmethod
    def from_dict(cls, obj: Mapping[str, Any]) -> Rule:
        raw = obj.get("match_substring", "")
        match = (raw,) if isinstance(raw, str) else tuple(raw)
        match = tuple(m for m in match if m)
        if "choices" in obj:
            choices = tuple(
                Choice(str(c["text"]), float(c.get("logit", 0.0)), _logprob_value(c)) for c in obj["choices"]
            )
        elif "output_text" in obj:
            choices = (Choice(str(obj["output_text"]), 0.0, _logprob_value(obj)),)
        else:
            choices = ()
        continuation = obj.get("continuation")
        rule = cls(match, choices, continuation, _logprob_value(obj))
        if continuation is None and not choices:
            raise ValueError(f"rule {dict(obj)!r} has neither output_text/choices nor continuation")
        if continuation is not None and rule.logprobs is None:
            raise ValueError(f"scoring rule for {continuation!r} needs per_token_logprob(_list)")
        return rule


class ScriptedBackend:
    """Deterministic backend driven by an ordered rule list.

    ``generate`` and ``score_continuation`` are pure functions of the rule set
    and the call arguments; sampling at temperature > 0 draws from an RNG seeded
    by ``(request.seed, prompt)``.
    """

    def __init__(
        self,
        rules: Sequence[Rule | Mapping[str, Any]],
        *,
        supports_logprobs: bool = True,
        supports_constrained: bool = True,
        unmentioned_logit: float = UNMENTIONED_LOGIT,
    ):
        self.rules = tuple(r if isinstance(r, Rule) else Rule.from_dict(r) for r in rules)
        defaults = [r for r in self.rules if r.is_default and r.continuation is None]
        if not defaults:
            raise ValueError("scripted rule set needs a default rule (empty match_substring)")
        self._default = defaults[0]
        self.supports_logprobs = supports_logprobs
        self.supports_constrained = supports_constrained
        self.unmentioned_logit = unmentioned_logit

    @classmethod
    def from_json(cls, path: str | Path, **kwargs: Any) -> ScriptedBackend:
        with open(path, encoding="utf-8") as fh:
            data = json.load(fh)
        if isinstance(data, dict):
            kwargs.setdefault("unmentioned_logit", data.get("unmentioned_logit", UNMENTIONED_LOGIT))
            data = data["rules"]
        return cls(data, **kwargs)

    def _generation_rule(self, prompt: str) -> Rule:
        for rule in self.rules:
            if rule.continuation is None and not rule.is_default and rule.matches(prompt):
                return rule
        return self._default

    def generate(self, request: CompletionRequest) -> CompletionResult:
        rule = self._generation_rule(request.prompt)
        if request.allowed_tokens is not None:
            if not self.supports_constrained:
                raise CapabilityError("allowed_tokens", "constrained decoding disabled for this backend")
            known = {c.text: c.logit for c in rule.choices}
            candidates = [(t, known.get(t, self.unmentioned_logit)) for t in sorted(request.allowed_tokens)]
        else:
            candidates = [(c.text, c.logit) for c in rule.choices]
        candidates = [(t, lg + request.logit_bias.get(t, 0.0)) for t, lg in candidates]

        if request.temperature == 0 or len(candidates) == 1:
            best = max(lg for _, lg in candidates)
            text = next(t for t, lg in candidates if lg == best)
        else:
            rng = random.Random(derive_seed(request.seed or 0, request.prompt))
            text = _sample(candidates, request.temperature, rng)

        text = truncate_at_stop(text, request.stop_sequences)
        words = text.split()
        if len(words) > request.max_new_tokens:
            words = words[: request.max_new_tokens]
            text = " ".join(words)
        return CompletionResult(text, len(request.prompt.split()), len(words))

    def score_continuation(self, prompt: str, continuation: str) -> ScoreResult:
        if not continuation.strip():
            raise ValueError("cannot score an empty continuation")
        if not self.supports_logprobs:
            raise CapabilityError("logprobs", "scripted backend configured without scoring")
        n = len(continuation.split())
        lp_value = self._score_value(prompt, continuation)
        lps = _expand_logprobs(lp_value, n, continuation)
        return ScoreResult.from_logprobs(lps, prompt_tokens=len(prompt.split()) + n)

    def _score_value(self, prompt: str, continuation: str) -> float | tuple[float, ...]:
        for rule in self.rules:
            if rule.is_default or not rule.matches(prompt):
                continue
            if rule.continuation is not None:
                if rule.continuation == continuation:
                    return rule.logprobs  # type: ignore[return-value]
                continue
            for choice in rule.choices:
                if choice.text == continuation and choice.logprobs is not None:
                    return choice.logprobs
        for rule in self.rules:
            if rule.is_default and rule.continuation == continuation:
                return rule.logprobs  # type: ignore[return-value]
        if self._default.logprobs is not None:
            return self._default.logprobs
        raise ValueError("default rule has no per_token_logprob; cannot score unmatched continuation")


def _sample(candidates: list[tuple[str, float]], temperature: float, rng: random.Random) -> str:
    top = max(lg for _, lg in candidates)
    if math.isinf(top) and top > 0:
        pool = [t for t, lg in candidates if lg == top]
        return pool[int(rng.random() * len(pool))]
    weights = [math.exp((lg - top) / temperature) for _, lg in candidates]
    u = rng.random() * math.fsum(weights)
    acc = 0.0
    for (text, _), w in zip(candidates, weights):
        acc += w
        if u < acc:
            return text
    return candidates[-1][0]


def scripted_backend(rule_set: Sequence[Rule | Mapping[str, Any]] | str | Path, **kwargs: Any) -> ScriptedBackend:
    if isinstance(rule_set, (str, Path)):
        return ScriptedBackend.from_json(rule_set, **kwargs)
    return ScriptedBackend(rule_set, **kwargs)


# --------------------------------------------------------------------------
# HTTP backend
# --------------------------------------------------------------------------


class HttpCompletionBackend:
    """Client for a completions-style endpoint (``POST {base_url}/completions``).

    Token-string logit biases and allowed-token sets are translated to token
    ids through the server's ``/tokenize`` route. Constrained decoding is sent
    as ``allowed_token_ids``, an extension some servers (e.g. vLLM) accept.
    """

    def __init__(
        self,
        base_url: str,
        model: str,
        api_key: str | None = None,
        *,
        client: httpx.Client | None = None,
        timeout: float = 120.0,
        max_attempts: int = 3,
        backoff: float = 1.0,
        supports_constrained: bool = True,
    ):
        self.base_url = base_url.rstrip("/")
        self.model = model
        self.max_attempts = max_attempts
        self.backoff = backoff
        self.supports_constrained = supports_constrained
        headers = {"Authorization": f"Bearer {api_key}"} if api_key else {}
        self._client = client or httpx.Client(timeout=timeout)
        self._headers = headers
        self._token_ids: dict[str, tuple[int, ...]] = {}
        self._lock = threading.Lock()

    def _post(self, route: str, payload: dict, *, root: bool = False) -> dict:
        base = self.base_url.removesuffix("/v1") if root else self.base_url
        url = base + route
        last: Exception | None = None
        for attempt in range(1, self.max_attempts + 1):
            try:
                resp = self._client.post(url, json=payload, headers=self._headers)
            except httpx.TransportError as exc:
                last = exc
            else:
                if resp.status_code < 400:
                    return resp.json()
                if resp.status_code == 429 or resp.status_code >= 500:
                    last = GatewayError(f"HTTP {resp.status_code}: {resp.text[:200]}")
                else:
                    self._raise_client_error(route, payload, resp)
            if attempt < self.max_attempts and self.backoff > 0:
                time.sleep(self.backoff * 2 ** (attempt - 1))
        raise TransportFailure(f"request to {url} failed: {last}", self.max_attempts)

    def _raise_client_error(self, route: str, payload: dict, resp: httpx.Response) -> None:
        body = resp.text[:500]
        if "allowed_token_ids" in payload and "allowed_token_ids" in body:
            raise CapabilityError("allowed_tokens", body)
        if "logit_bias" in payload and "logit_bias" in body:
            raise CapabilityError("logit_bias", body)
        if payload.get("echo") and ("echo" in body or "logprobs" in body):
            raise CapabilityError("echo-with-logprobs", body)
        if route == "/tokenize" and resp.status_code == 404:
            raise CapabilityError("tokenize", "needed to map token strings to ids")
        raise GatewayError(f"HTTP {resp.status_code}: {body}")

    def token_ids(self, token: str) -> tuple[int, ...]:
        with self._lock:
            cached = self._token_ids.get(token)
        if cached is not None:
            return cached
        data = self._post(
            "/tokenize", {"model": self.model, "prompt": token, "add_special_tokens": False}, root=True
        )
        ids = tuple(int(i) for i in data["tokens"])
        if not ids:
            raise GatewayError(f"token string {token!r} tokenized to nothing")
        if len(ids) > 1:
            logger.warning("token string %r maps to %d ids; biasing all of them", token, len(ids))
        with self._lock:
            self._token_ids[token] = ids
        return ids

    def generate(self, request: CompletionRequest) -> CompletionResult:
        payload: dict[str, Any] = {
            "model": self.model,
            "prompt": request.prompt,
            "temperature": request.temperature,
            "max_tokens": request.max_new_tokens,
        }
        if request.stop_sequences:
            payload["stop"] = list(request.stop_sequences)
        if request.seed is not None:
            payload["seed"] = request.seed
        if request.logit_bias:
            bias: dict[str, float] = {}
            for tok, value in request.logit_bias.items():
                clipped = max(-MAX_HTTP_BIAS, min(MAX_HTTP_BIAS, value))
                for tid in self.token_ids(tok):
                    bias[str(tid)] = clipped
            payload["logit_bias"] = bias
        if request.allowed_tokens is not None:
            if not self.supports_constrained:
                raise CapabilityError("allowed_tokens")
            ids = sorted({tid for tok in request.allowed_tokens for tid in self.token_ids(tok)})
            payload["allowed_token_ids"] = ids
        data = self._post("/completions", payload)
        try:
            text = data["choices"][0]["text"]
            usage = data["usage"]
            prompt_tokens = int(usage["prompt_tokens"])
            generated = int(usage.get("completion_tokens", 0))
        except (KeyError, IndexError, TypeError) as exc:
            raise GatewayError(f"malformed completion response: {exc}") from exc
        text = truncate_at_stop(text, request.stop_sequences).strip()
        return CompletionResult(text, prompt_tokens, min(generated, request.max_new_tokens))

    def score_continuation(self, prompt: str, continuation: str) -> ScoreResult:
        if not continuation:
            raise ValueError("cannot score an empty continuation")
        payload = {
            "model": self.model,
            "prompt": prompt + continuation,
            "max_tokens": 1,
            "temperature": 0.0,
            "echo": True,
            "logprobs": 0,
        }
        data = self._post("/completions", payload)
        try:
            lp = data["choices"][0]["logprobs"]
            tokens, token_lps, offsets = lp["tokens"], lp["token_logprobs"], lp["text_offset"]
            usage = data["usage"]
        except (KeyError, IndexError, TypeError):
            raise CapabilityError("echo-with-logprobs", "response carried no prompt logprobs") from None
        n_echo = int(usage.get("prompt_tokens", len(tokens)))
        boundary = len(prompt)
        selected = [
            token_lps[i]
            for i in range(min(n_echo, len(tokens)))
            if offsets[i] + len(tokens[i]) > boundary
        ]
        if not selected or any(x is None for x in selected):
            raise CapabilityError("echo-with-logprobs", "continuation tokens lack logprobs")
        return ScoreResult.from_logprobs(
            selected, prompt_tokens=int(usage.get("prompt_tokens", 0)), generated_tokens=int(usage.get("completion_tokens", 0))
        )


# --------------------------------------------------------------------------
# score cache
# --------------------------------------------------------------------------


class CachedScorer:
    """Memoize ``score_continuation`` by (prompt, continuation); generation passes through.

    Cache hits issue no backend call, so they add nothing to a token ledger
    sitting underneath.
    """

    def __init__(self, lm: LanguageModel):
        self.lm = lm
        self._cache: dict[tuple[str, str], ScoreResult] = {}
        self._lock = threading.Lock()
        self.hits = 0
        self.misses = 0

    def generate(self, request: CompletionRequest) -> CompletionResult:
        return self.lm.generate(request)

    def score_continuation(self, prompt: str, continuation: str) -> ScoreResult:
        key = (prompt, continuation)
        with self._lock:
            hit = self._cache.get(key)
            if hit is not None:
                self.hits += 1
                return hit
        result = self.lm.score_continuation(prompt, continuation)
        with self._lock:
            self.misses += 1
            self._cache.setdefault(key, result)
        return result
