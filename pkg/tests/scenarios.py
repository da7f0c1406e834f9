"""Scripted fixtures shared by the test-suite.

Rules key on fragments that appear in exactly one prompt type, so a scripted
backend can tell the four prompts apart.
"""

from __future__ import annotations

import json
import random
from dataclasses import dataclass, field
from pathlib import Path

from corag.prompts import NO_INFO_ANSWER, TaskDescription
from corag.retrieval import Document

SUBQUERY = "Respond with a simple follow-up question"
SUBANSWER = "Respond with a concise answer only"
FINAL = "generate a final answer for the main query"
STOP = 'Respond with "Yes" or "No" only'

TASK = TaskDescription("2wikimultihopqa", "answer multi-hop questions")


def subanswer_query(sub_query: str) -> str:
    return f"## Query\n{sub_query}\n"


def history_line(k: int, sub_query: str) -> str:
    return f"Intermediate query {k}: {sub_query}\n"


# --------------------------------------------------------------------------
# the Mjällby / Lennon example
# --------------------------------------------------------------------------

FIG_QUERY = "How many months apart are Johan Mjällby and Neil Lennon in age?"
FIG_SUBQUERIES = (
    "What is Johan Mjällby's birthdate?",
    "What is Neil Lennon's birthdate?",
    "What is the difference in months between 9 February 1971 and 25 June 1971?",
)
FIG_SUBANSWERS = ("9 February 1971", "25 June 1971", "4 months")


def fig_corpus() -> list[Document]:
    return [
        Document("d1", "Johan Mjällby", "Johan Mjällby (born 9 February 1971) is a Swedish former footballer who played for Celtic."),
        Document("d2", "Neil Lennon", "Neil Lennon (born 25 June 1971) is a Northern Irish football manager and former player."),
        Document("d3", "Celtic F.C.", "Celtic Football Club is a Scottish club based in Glasgow."),
        Document("d4", "Mjällby AIF", "Mjällby AIF is a Swedish football club located in Hällevik."),
        Document("d5", "John Lennon", "John Lennon was an English singer and songwriter born in Liverpool."),
        Document("d6", "Month", "A month is a unit of time used with calendars, roughly 30 days long."),
    ]


def fig_rules() -> list[dict]:
    s1, s2, s3 = FIG_SUBQUERIES
    return [
        # after three hops the model keeps asking the date-difference question
        {"match_substring": [SUBQUERY, "Intermediate query 3:"], "output_text": s3},
        {"match_substring": [SUBQUERY, "Intermediate query 2:"], "output_text": s3},
        {"match_substring": [SUBQUERY, "Intermediate query 1:"], "output_text": s2},
        {"match_substring": [SUBQUERY], "output_text": s1},
        {"match_substring": [SUBANSWER, subanswer_query(s1)], "output_text": FIG_SUBANSWERS[0]},
        {"match_substring": [SUBANSWER, subanswer_query(s2)], "output_text": FIG_SUBANSWERS[1]},
        {"match_substring": [SUBANSWER, subanswer_query(s3)], "output_text": FIG_SUBANSWERS[2]},
        {"match_substring": [FINAL, "Intermediate answer 3: 4 months"], "output_text": "4"},
        {"match_substring": [FINAL], "output_text": "two months"},
        {"match_substring": [STOP], "choices": [{"text": "No", "logit": 0.0}, {"text": "Yes", "logit": -3.0}]},
        {"match_substring": "", "output_text": NO_INFO_ANSWER, "per_token_logprob": -2.0},
    ]


# --------------------------------------------------------------------------
# parameterised multi-hop family
# --------------------------------------------------------------------------


@dataclass
class Family:
    corpus: list[Document]
    rules: list[dict]
    dataset: list[dict]
    extra: dict = field(default_factory=dict)

    def write(self, root: Path) -> dict[str, Path]:
        root.mkdir(parents=True, exist_ok=True)
        paths = {"corpus": root / "corpus.jsonl", "rules": root / "rules.json", "dataset": root / "dataset.jsonl"}
        paths["corpus"].write_text("".join(json.dumps(d.to_dict()) + "\n" for d in self.corpus), encoding="utf-8")
        paths["rules"].write_text(json.dumps({"rules": self.rules}, indent=1), encoding="utf-8")
        paths["dataset"].write_text("".join(json.dumps(r) + "\n" for r in self.dataset), encoding="utf-8")
        return paths


def hop_query(i: int, j: int) -> str:
    return f"Which fact {j} belongs to item {i}?"


def side_query(i: int, j: int, v: int) -> str:
    return f"Is there a rumor {j}.{v} about item {i}?"


def hop_answer(i: int, j: int) -> str:
    return f"v{i}x{j}"


def multihop_family(
    n_instances: int = 3,
    hops: int | list[int] = 3,
    *,
    max_depth: int = 12,
    n_side: int = 0,
    side_logit: float = -1.0,
    gold_logprob: float = -0.01,
    partial_logprob: float = -1.5,
    stop_logits: list[float] | None = None,
    gold_in_subanswer: bool = False,
    seed: int = 0,
) -> Family:
    """``n_instances`` questions; question i needs ``hops[i]`` informative steps.

    Sub-queries are keyed on the step count, so greedy decoding never repeats
    itself for up to ``max_depth`` steps. ``n_side`` adds sampled alternatives
    at each step whose documents carry no information. ``stop_logits[k]`` is
    the "Yes" logit after k steps ("No" sits at 0).
    """
    rng = random.Random(seed)
    hops_list = [hops] * n_instances if isinstance(hops, int) else list(hops)
    corpus: list[Document] = []
    rules: list[dict] = []
    dataset: list[dict] = []
    for i in range(n_instances):
        h = hops_list[i]
        query = f"What is the final code of item {i} after following its facts?"
        gold = f"answer{i}"
        dataset.append({"query": query, "answers": [gold], "dataset_id": "2wikimultihopqa"})
        for j in range(1, h + 1):
            corpus.append(Document(f"i{i}f{j}", f"Item {i} fact {j}", f"Fact {j} of item {i} is {hop_answer(i, j)}."))
        corpus.append(Document(f"i{i}gold", f"Item {i} code", f"The final code of item {i} is {gold}."))
        corpus.append(Document(f"i{i}noise", f"Item {i} rumors", f"Rumors about item {i} say nothing certain {rng.random():.3f}."))

        for k in range(max_depth - 1, -1, -1):
            # k = number of completed steps
            main = hop_query(i, k + 1)
            choices = [{"text": main, "logit": 0.0}]
            choices += [{"text": side_query(i, k + 1, v), "logit": side_logit} for v in range(n_side)]
            match = [SUBQUERY, query] + ([f"Intermediate query {k}:"] if k else [])
            rules.append({"match_substring": match, "choices": choices})
        for j in range(1, max_depth + 1):
            q = hop_query(i, j)
            if j <= h:
                ans = gold if (gold_in_subanswer and j == h) else hop_answer(i, j)
                rules.append({"match_substring": [SUBANSWER, subanswer_query(q)], "output_text": ans})
                rules.append(
                    {"match_substring": [SUBANSWER, subanswer_query(q)], "continuation": NO_INFO_ANSWER, "per_token_logprob": -6.0}
                )
        last = f"Intermediate answer {h}: {gold if gold_in_subanswer else hop_answer(i, h)}\n"
        rules.append(
            {"match_substring": [FINAL, query, last], "choices": [{"text": gold, "per_token_logprob": gold_logprob}]}
        )
        rules.append({"match_substring": [FINAL, query], "choices": [{"text": "unknown", "logit": 0.0}]})
        rules.append({"match_substring": [FINAL, query], "continuation": gold, "per_token_logprob": partial_logprob})
    if stop_logits is not None:
        for k in range(len(stop_logits) - 1, 0, -1):
            rules.append(
                {
                    "match_substring": [STOP, f"Intermediate query {k}:"],
                    "choices": [{"text": "Yes", "logit": stop_logits[k]}, {"text": "No", "logit": 0.0}],
                }
            )
    rules.append({"match_substring": "", "output_text": NO_INFO_ANSWER, "per_token_logprob": -0.1})
    return Family(corpus, rules, dataset)
