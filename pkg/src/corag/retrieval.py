"""Corpus handling, a BM25 inverted index, external retrievers and rank fusion."""

from __future__ import annotations

import json
import math
import re
from collections import Counter, defaultdict
from dataclasses import dataclass
from pathlib import Path
from types import MappingProxyType
from typing import Iterable, Iterator, Mapping, Protocol, Sequence

import httpx

from corag.errors import DuplicateDocumentError, RetrievalError

DEFAULT_K1 = 0.9
DEFAULT_B = 0.4
DEFAULT_RRF_K = 60
DEFAULT_RRF_DEPTH = 100

_TOKEN_RE = re.compile(r"[^\W_]+")


def tokenize(text: str) -> list[str]:
    """Lowercase and split on anything that is not a letter or digit."""
    return _TOKEN_RE.findall(text.lower())


@dataclass(frozen=True)
class Document:
    doc_id: str
    title: str
    text: str

    def __post_init__(self) -> None:
        if not self.text.strip():
            raise ValueError(f"document {self.doc_id!r} has empty text")

    def to_dict(self) -> dict:
        return {"id": self.doc_id, "title": self.title, "text": self.text}


@dataclass(frozen=True)
class RankedList:
    entries: tuple[tuple[str, float], ...] = ()

    def __post_init__(self) -> None:
        object.__setattr__(self, "entries", tuple((str(d), float(s)) for d, s in self.entries))
        seen: set[str] = set()
        prev = math.inf
        for doc_id, score in self.entries:
            if doc_id in seen:
                raise ValueError(f"doc_id {doc_id!r} appears twice in ranked list")
            if score > prev:
                raise ValueError("ranked list scores must be non-increasing")
            seen.add(doc_id)
            prev = score

    @property
    def doc_ids(self) -> list[str]:
        return [d for d, _ in self.entries]

    def __len__(self) -> int:
        return len(self.entries)

    def __iter__(self) -> Iterator[tuple[str, float]]:
        return iter(self.entries)

    def head(self, k: int) -> RankedList:
        return RankedList(self.entries[:k])


class Retriever(Protocol):
    def search(self, query: str, k: int) -> RankedList: ...

    def get(self, doc_id: str) -> Document: ...


def read_corpus(path: str | Path) -> Iterator[tuple[int, Document]]:
    """Yield ``(line_number, Document)`` from a JSON-lines corpus file."""
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
                doc = Document(str(obj["id"]), str(obj.get("title", "")), str(obj["text"]))
            except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
                raise RetrievalError(f"{path}: malformed corpus line {lineno}: {exc}") from exc
            yield lineno, doc


class DocumentStore:
    """Immutable doc_id -> Document mapping."""

    def __init__(self, docs: Iterable[Document]):
        store: dict[str, Document] = {}
        for doc in docs:
            if doc.doc_id in store:
                raise DuplicateDocumentError(doc.doc_id)
            store[doc.doc_id] = doc
        self._docs = MappingProxyType(store)

    @classmethod
    def from_jsonl(cls, path: str | Path) -> DocumentStore:
        store: dict[str, Document] = {}
        for lineno, doc in read_corpus(path):
            if doc.doc_id in store:
                raise DuplicateDocumentError(doc.doc_id, lineno)
            store[doc.doc_id] = doc
        return cls(store.values())

    def get(self, doc_id: str) -> Document:
        try:
            return self._docs[doc_id]
        except KeyError:
            raise RetrievalError(f"unknown doc_id {doc_id!r}") from None

    def __contains__(self, doc_id: object) -> bool:
        return doc_id in self._docs

    def __len__(self) -> int:
        return len(self._docs)

    def __iter__(self) -> Iterator[Document]:
        return iter(self._docs.values())


class BM25Index:
    """Okapi BM25 over an in-memory inverted index.

    Titles are indexed together with the body. Scores use the Lucene-style
    idf ``log(1 + (N - df + 0.5) / (df + 0.5))`` so every matching term
    contributes a positive amount. Repeated query
    terms count once per occurrence. Only documents sharing at least one
    term with the query are returned; ties are broken by ``doc_id``.
    """

    def __init__(
        self,
        docs: Sequence[Document],
        postings: Mapping[str, Sequence[tuple[int, int]]],
        doc_lengths: Sequence[int],
        k1: float = DEFAULT_K1,
        b: float = DEFAULT_B,
    ):
        self._docs = tuple(docs)
        self._store = DocumentStore(self._docs)
        self._postings = MappingProxyType({t: tuple(map(tuple, p)) for t, p in postings.items()})
        self._doc_lengths = tuple(doc_lengths)
        self.k1 = k1
        self.b = b
        self._avgdl = sum(self._doc_lengths) / len(self._doc_lengths) if self._docs else 0.0

    @classmethod
    def build(
        cls, corpus: Iterable[Document], k1: float = DEFAULT_K1, b: float = DEFAULT_B
    ) -> BM25Index:
        docs: list[Document] = []
        seen: set[str] = set()
        postings: dict[str, list[tuple[int, int]]] = defaultdict(list)
        lengths: list[int] = []
        for doc in corpus:
            if doc.doc_id in seen:
                raise DuplicateDocumentError(doc.doc_id)
            seen.add(doc.doc_id)
            idx = len(docs)
            docs.append(doc)
            terms = tokenize(f"{doc.title} {doc.text}")
            lengths.append(len(terms))
            for term, tf in Counter(terms).items():
                postings[term].append((idx, tf))
        if not docs:
            raise RetrievalError("cannot build an index over an empty corpus")
        return cls(docs, postings, lengths, k1=k1, b=b)

    def __len__(self) -> int:
        return len(self._docs)

    def get(self, doc_id: str) -> Document:
        return self._store.get(doc_id)

    @property
    def store(self) -> DocumentStore:
        return self._store

    def idf(self, term: str) -> float:
        df = len(self._postings.get(term, ()))
        n = len(self._docs)
        return math.log(1.0 + (n - df + 0.5) / (df + 0.5))

    def search(self, query: str, k: int) -> RankedList:
        if k < 1:
            raise ValueError(f"k must be >= 1, got {k}")
        scores: dict[int, float] = {}
        for term in tokenize(query):
            plist = self._postings.get(term)
            if not plist:
                continue
            idf = self.idf(term)
            for idx, tf in plist:
                norm = self.k1 * (1.0 - self.b + self.b * self._doc_lengths[idx] / self._avgdl)
                scores[idx] = scores.get(idx, 0.0) + idf * tf * (self.k1 + 1.0) / (tf + norm)
        ranked = sorted(scores.items(), key=lambda kv: (-kv[1], self._docs[kv[0]].doc_id))
        return RankedList(tuple((self._docs[i].doc_id, s) for i, s in ranked[:k]))

    def save(self, path: str | Path) -> None:
        payload = {
            "format": "corag-bm25/1",
            "k1": self.k1,
            "b": self.b,
            "docs": [d.to_dict() for d in self._docs],
            "doc_lengths": list(self._doc_lengths),
            "postings": {t: [list(p) for p in plist] for t, plist in sorted(self._postings.items())},
        }
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(payload, fh, ensure_ascii=False, sort_keys=True)

    @classmethod
    def load(cls, path: str | Path) -> BM25Index:
        with open(path, encoding="utf-8") as fh:
            payload = json.load(fh)
        if payload.get("format") != "corag-bm25/1":
            raise RetrievalError(f"{path}: not a BM25 index file")
        docs = [Document(d["id"], d["title"], d["text"]) for d in payload["docs"]]
        return cls(docs, payload["postings"], payload["doc_lengths"], payload["k1"], payload["b"])


def build_index(corpus: Iterable[Document], k1: float = DEFAULT_K1, b: float = DEFAULT_B) -> BM25Index:
    return BM25Index.build(corpus, k1=k1, b=b)


def search(index: Retriever, query: str, k: int) -> RankedList:
    return index.search(query, k)


class HttpRetriever:
    """Client for an external retriever speaking ``{query, k} -> [{doc_id, score}]``.

    Document bodies are resolved from a local store so prompts can be rendered.
    """

    def __init__(self, url: str, store: DocumentStore, *, client: httpx.Client | None = None, timeout: float = 30.0):
        self.url = url
        self.store = store
        self._client = client or httpx.Client(timeout=timeout)

    def search(self, query: str, k: int) -> RankedList:
        if k < 1:
            raise ValueError(f"k must be >= 1, got {k}")
        try:
            resp = self._client.post(self.url, json={"query": query, "k": k})
            resp.raise_for_status()
            body = resp.json()
        except (httpx.HTTPError, ValueError) as exc:
            raise RetrievalError(f"retriever request failed: {exc}") from exc
        rows = body["results"] if isinstance(body, dict) else body
        try:
            entries = tuple((str(r["doc_id"]), float(r["score"])) for r in rows[:k])
            return RankedList(entries)
        except (KeyError, TypeError, ValueError) as exc:
            raise RetrievalError(f"malformed retriever response: {exc}") from exc

    def get(self, doc_id: str) -> Document:
        return self.store.get(doc_id)


def rrf_merge(
    rankings: Sequence[RankedList],
    k_rrf: int = DEFAULT_RRF_K,
    depth: int = DEFAULT_RRF_DEPTH,
) -> RankedList:
    """Reciprocal rank fusion: score(d) = sum of 1 / (k_rrf + rank) over lists holding d."""
    if not rankings:
        raise ValueError("rrf_merge needs at least one ranking")
    if k_rrf < 1 or depth < 1:
        raise ValueError("k_rrf and depth must be positive")
    contributions: dict[str, list[float]] = defaultdict(list)
    for ranking in rankings:
        for rank, (doc_id, _) in enumerate(ranking.entries[:depth], start=1):
            contributions[doc_id].append(1.0 / (k_rrf + rank))
    # fsum is exactly rounded, so fused scores do not depend on input list order
    fused = [(doc_id, math.fsum(parts)) for doc_id, parts in contributions.items()]
    fused.sort(key=lambda e: (-e[1], e[0]))
    return RankedList(tuple(fused))
