"""Rendering of the four chain-of-retrieval prompts.

Template text lives in ``templates/*.txt`` next to this module and is the
single source of truth for both data generation and decoding.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass
from functools import lru_cache
from importlib import resources
from pathlib import Path
from typing import Mapping, Sequence

from corag.retrieval import Document

EMPTY_HISTORY = "(none)"
NO_DOCUMENTS = "(no documents retrieved)"
NO_INFO_ANSWER = "No relevant information found"

TEMPLATE_NAMES = ("subquery", "subanswer", "final", "stop")
PLACEHOLDERS = ("intermediate", "task_description", "query", "documents", "sub_query")
_PLACEHOLDER_RE = re.compile(r"\{(" + "|".join(PLACEHOLDERS) + r")\}")


@dataclass(frozen=True)
class TaskDescription:
    dataset_id: str
    description: str

    def __post_init__(self) -> None:
        if not self.description.strip():
            raise ValueError(f"empty task description for dataset {self.dataset_id!r}")


History = Sequence[tuple[str, str]]


@lru_cache(maxsize=None)
def load_template(name: str) -> str:
    if name not in TEMPLATE_NAMES:
        raise KeyError(f"unknown template {name!r}")
    text = resources.files("corag").joinpath(f"templates/{name}.txt").read_text(encoding="utf-8")
    # asset files carry one trailing newline by convention; prompts do not
    return text[:-1] if text.endswith("\n") else text


def load_task_descriptions(path: str | Path | None = None) -> dict[str, TaskDescription]:
    """Load the dataset_id -> task description table (bundled table by default)."""
    if path is None:
        raw = resources.files("corag").joinpath("task_descriptions.json").read_text(encoding="utf-8")
    else:
        raw = Path(path).read_text(encoding="utf-8")
    table: Mapping[str, str] = json.loads(raw)
    return {k: TaskDescription(k, v) for k, v in table.items()}


def get_task(dataset_id: str, table: Mapping[str, TaskDescription] | None = None) -> TaskDescription:
    table = load_task_descriptions() if table is None else table
    key = dataset_id if dataset_id in table else dataset_id.lower()
    try:
        return table[key]
    except KeyError:
        raise KeyError(f"no task description for dataset {dataset_id!r}") from None


def format_history(history: History) -> str:
    if not history:
        return EMPTY_HISTORY
    lines = []
    for i, (sub_query, sub_answer) in enumerate(history, start=1):
        lines.append(f"Intermediate query {i}: {sub_query}")
        lines.append(f"Intermediate answer {i}: {sub_answer}")
    return "\n".join(lines)


def format_documents(docs: Sequence[Document]) -> str:
    if not docs:
        return NO_DOCUMENTS
    return "\n\n".join(f"Doc {rank}: {d.title}\n{d.text}" for rank, d in enumerate(docs, start=1))


def _fill(name: str, **values: str) -> str:
    # substitute in one pass so placeholder-like text inside values is left alone
    template = load_template(name)
    return _PLACEHOLDER_RE.sub(lambda m: values[m.group(1)], template)


def render_subquery_prompt(query: str, history: History, task: TaskDescription) -> str:
    return _fill(
        "subquery",
        intermediate=format_history(history),
        task_description=task.description,
        query=query,
    )


def render_subanswer_prompt(sub_query: str, docs: Sequence[Document], *, allow_empty: bool = False) -> str:
    """Render the intermediate-answer prompt.

    Empty ``docs`` is an error unless ``allow_empty`` is set, in which case the
    documents block holds the no-documents sentinel line.
    """
    if not docs and not allow_empty:
        raise ValueError("no documents to ground answer")
    return _fill("subanswer", documents=format_documents(docs), sub_query=sub_query)


def render_final_prompt(
    query: str,
    history: History,
    docs: Sequence[Document],
    task: TaskDescription,
    *,
    allow_empty: bool = False,
) -> str:
    if not docs and not allow_empty:
        raise ValueError("no documents to ground answer")
    return _fill(
        "final",
        documents=format_documents(docs),
        intermediate=format_history(history),
        task_description=task.description,
        query=query,
    )


def render_stop_prompt(query: str, history: History) -> str:
    return _fill("stop", intermediate=format_history(history), query=query)
