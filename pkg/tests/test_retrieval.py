import json
import math
import random

import httpx
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from corag.errors import DuplicateDocumentError, RetrievalError
from oracles import brute_bm25, brute_rrf
from corag.retrieval import (
    BM25Index,
    Document,
    DocumentStore,
    HttpRetriever,
    RankedList,
    build_index,
    read_corpus,
    rrf_merge,
    search,
    tokenize,
)

VOCAB = [f"w{i}" for i in range(12)]


def random_corpus(rng, n):
    return [
        Document(f"d{i:02d}", rng.choice(["", "Title " + rng.choice(VOCAB)]), " ".join(rng.choices(VOCAB, k=rng.randint(1, 15))))
        for i in range(n)
    ]


def random_ranking(rng, pool):
    ids = rng.sample(pool, rng.randint(1, len(pool)))
    scores = sorted((rng.random() for _ in ids), reverse=True)
    return RankedList(tuple(zip(ids, scores)))


# --------------------------------------------------------------------------


def test_tokenize_lowercases_and_splits_on_non_alnum():
    assert tokenize("Neil Lennon's 25-June_1971!") == ["neil", "lennon", "s", "25", "june", "1971"]


def test_three_doc_index_counts():
    index = build_index([Document("a", "", "x"), Document("b", "", "y"), Document("c", "", "z")])
    assert len(index) == 3


def test_duplicate_id_is_reported():
    with pytest.raises(DuplicateDocumentError, match="'a'"):
        build_index([Document("a", "", "x"), Document("a", "", "y")])


def test_empty_text_rejected():
    with pytest.raises(ValueError):
        Document("a", "t", "   ")


def test_single_doc_single_term_hand_value():
    # idf = ln(1 + 0.5/1.5) = ln(4/3); tf=1 and dl=avgdl make the tf part (k1+1)/(1+k1) = 1
    index = build_index([Document("only", "", "term")])
    (doc_id, score), = index.search("term", 5)
    assert doc_id == "only"
    assert score == pytest.approx(math.log(4 / 3), abs=1e-12)


def test_unique_term_ranks_its_doc_first():
    index = build_index([Document("a", "", "common zebra"), Document("b", "", "common common"), Document("c", "", "common")])
    assert index.search("zebra", 3).doc_ids == ["a"]


def test_k_must_be_positive():
    index = build_index([Document("a", "", "x")])
    with pytest.raises(ValueError):
        index.search("x", 0)


def test_bm25_matches_brute_force_on_50_docs():
    rng = random.Random(7)
    docs = random_corpus(rng, 50)
    index = build_index(docs)
    for _ in range(30):
        q = " ".join(rng.choices(VOCAB, k=rng.randint(1, 4)))
        got = search(index, q, 10)
        want = brute_bm25(docs, q, 10)
        assert got.doc_ids == [d for d, _ in want]
        assert [s for _, s in got] == pytest.approx([s for _, s in want], abs=1e-9)


def test_ten_thousand_doc_smoke():
    rng = random.Random(3)
    words = [f"t{i}" for i in range(3000)]
    docs = [Document(f"doc{i}", "", " ".join(rng.choices(words, k=20))) for i in range(10_000)]
    index = build_index(docs)
    assert len(index) == 10_000
    hits = index.search(docs[123].text, 5)
    assert hits.doc_ids[0] == "doc123"


@settings(max_examples=60, deadline=None)
@given(seed=st.integers(0, 10_000), k1=st.integers(1, 10), k2=st.integers(1, 10))
def test_search_prefix_property(seed, k1, k2):
    rng = random.Random(seed)
    index = build_index(random_corpus(rng, 20))
    q = " ".join(rng.choices(VOCAB, k=3))
    lo, hi = sorted((k1, k2))
    small, big = index.search(q, lo), index.search(q, hi)
    assert small.entries == big.entries[: len(small)]
    assert index.search(q, hi) == big


def test_save_load_round_trip(tmp_path):
    rng = random.Random(1)
    docs = random_corpus(rng, 30)
    index = build_index(docs)
    path = tmp_path / "idx.json"
    index.save(path)
    loaded = BM25Index.load(path)
    for q in ["w1 w2", "w3", "title w5"]:
        assert loaded.search(q, 10) == index.search(q, 10)
    index.save(tmp_path / "again.json")
    assert (tmp_path / "again.json").read_bytes() == path.read_bytes()


def test_load_rejects_foreign_file(tmp_path):
    p = tmp_path / "x.json"
    p.write_text("{}")
    with pytest.raises(RetrievalError):
        BM25Index.load(p)


def test_read_corpus_reports_line_numbers(tmp_path):
    p = tmp_path / "c.jsonl"
    p.write_text('{"id": "a", "title": "", "text": "x"}\nnot json\n')
    with pytest.raises(RetrievalError, match="line 2"):
        list(read_corpus(p))
    p.write_text('{"id": "a", "title": "", "text": "x"}\n{"id": "a", "title": "", "text": "y"}\n')
    with pytest.raises(DuplicateDocumentError, match="line 2"):
        DocumentStore.from_jsonl(p)


def test_ranked_list_invariants():
    with pytest.raises(ValueError):
        RankedList((("a", 1.0), ("b", 2.0)))
    with pytest.raises(ValueError):
        RankedList((("a", 1.0), ("a", 0.5)))


# --------------------------------------------------------------------------
# rank fusion
# --------------------------------------------------------------------------


def test_rrf_single_ranking_identity():
    r = RankedList((("x", 3.0), ("a", 2.0), ("m", 1.0)))
    assert rrf_merge([r]).doc_ids == ["x", "a", "m"]


def test_rrf_hand_value():
    r1 = RankedList((("d", 1.0), ("e", 0.5)))
    r2 = RankedList((("f", 3.0), ("g", 2.0), ("d", 1.0)))
    fused = dict(rrf_merge([r1, r2]).entries)
    assert fused["d"] == pytest.approx(1 / 61 + 1 / 63, abs=1e-15)


def test_rrf_depth_truncates():
    r = RankedList((("a", 3.0), ("b", 2.0), ("c", 1.0)))
    assert rrf_merge([r], depth=2).doc_ids == ["a", "b"]


def test_rrf_requires_input():
    with pytest.raises(ValueError):
        rrf_merge([])


def test_rrf_matches_brute_force():
    rng = random.Random(11)
    pool = [f"p{i}" for i in range(25)]
    for _ in range(200):
        rankings = [random_ranking(rng, pool) for _ in range(rng.randint(1, 5))]
        depth = rng.choice([3, 10, 100])
        got = rrf_merge(rankings, depth=depth)
        order, scores = brute_rrf(rankings, depth=depth)
        assert got.doc_ids == order
        for d, s in got:
            assert s == pytest.approx(scores[d], abs=1e-15)


@settings(max_examples=80, deadline=None)
@given(seed=st.integers(0, 10_000), perm_seed=st.integers(0, 1000))
def test_rrf_permutation_invariant(seed, perm_seed):
    rng = random.Random(seed)
    pool = [f"p{i}" for i in range(8)]
    rankings = [random_ranking(rng, pool) for _ in range(4)]
    shuffled = rankings[:]
    random.Random(perm_seed).shuffle(shuffled)
    assert rrf_merge(rankings) == rrf_merge(shuffled)


# --------------------------------------------------------------------------
# external retriever
# --------------------------------------------------------------------------


def test_http_retriever_round_trip():
    store = DocumentStore([Document("a", "A", "alpha"), Document("b", "B", "beta")])
    seen = {}

    def handler(request: httpx.Request) -> httpx.Response:
        seen.update(json.loads(request.content))
        return httpx.Response(200, json={"results": [{"doc_id": "b", "score": 2.0}, {"doc_id": "a", "score": 1.0}]})

    ret = HttpRetriever("http://r/search", store, client=httpx.Client(transport=httpx.MockTransport(handler)))
    out = ret.search("q", 2)
    assert seen == {"query": "q", "k": 2}
    assert out.doc_ids == ["b", "a"]
    assert ret.get("a").text == "alpha"


def test_http_retriever_errors_are_wrapped():
    store = DocumentStore([Document("a", "A", "alpha")])
    client = httpx.Client(transport=httpx.MockTransport(lambda r: httpx.Response(500)))
    with pytest.raises(RetrievalError):
        HttpRetriever("http://r", store, client=client).search("q", 1)
    client = httpx.Client(transport=httpx.MockTransport(lambda r: httpx.Response(200, json=[{"id": "a"}])))
    with pytest.raises(RetrievalError):
        HttpRetriever("http://r", store, client=client).search("q", 1)
