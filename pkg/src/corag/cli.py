"""Command-line entry point: ``corag {index,sample,decode,eval}``.

Settings resolve as CLI flags > ``--config`` JSON file > built-in defaults.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
import time
from collections import Counter
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Any, Callable, Iterator, Sequence

from corag import __version__
from corag.chain import chain_to_dict
from corag.decoding import DecodeConfig, decode
from corag.errors import CapabilityError, CoragError, DuplicateDocumentError, RetrievalError
from corag.evaluation import (
    ScorePoint,
    bootstrap_ci,
    exact_match,
    f1,
    fit_log_linear,
    pareto_frontier,
    recall_at_k,
)
from corag.lm import CachedScorer, HttpCompletionBackend, LanguageModel, ScriptedBackend
from corag.prompts import get_task, load_task_descriptions
from corag.retrieval import (
    BM25Index,
    DocumentStore,
    HttpRetriever,
    RankedList,
    Retriever,
    read_corpus,
    rrf_merge,
)
from corag.rng import derive_seed
from corag.sampler import QAInstance, emit_training_instances, sample_chains, select_best_chain
from corag.trace import RunTrace

logger = logging.getLogger("corag")

META_FILE = "run_meta.json"
RECALL_KS = (10, 20, 100)


class UsageError(Exception):
    pass


@dataclass
class RunConfig:
    corpus_path: str | None = None
    index_path: str | None = None
    dataset_path: str | None = None
    task_table_path: str | None = None
    backend: str = "scripted"
    rules_path: str | None = None
    endpoint: str | None = None
    model: str | None = None
    api_key_env: str = "OPENAI_API_KEY"
    retriever_url: str | None = None
    output_dir: str = "out"
    seed: int = 0
    workers: int = 1
    resume: bool = False
    step_k: int = 5
    final_k: int = 20
    # sampler
    max_chains: int = 16
    length_range: tuple[int, int] = (1, 5)
    subtask_sample_ratio: float = 0.2
    sample_temperature: float = 0.7
    # decoder
    decode: DecodeConfig = field(default_factory=DecodeConfig)
    runs: list[tuple[str, DecodeConfig]] = field(default_factory=list)

    def validate(self, *, need_dataset: bool = True) -> None:
        for name in ("corpus_path", "index_path", "dataset_path", "task_table_path", "rules_path"):
            value = getattr(self, name)
            if value is not None and not Path(value).exists():
                raise UsageError(f"{name} does not exist: {value}")
        if need_dataset and not self.dataset_path:
            raise UsageError("a dataset is required (--dataset)")
        if not (self.corpus_path or self.index_path):
            raise UsageError("a corpus (--corpus) or index (--index) is required")
        if self.backend == "scripted" and not self.rules_path:
            raise UsageError("scripted backend needs --rules")
        if self.backend == "http" and not (self.endpoint and self.model):
            raise UsageError("http backend needs --endpoint and --model")
        if self.backend not in ("scripted", "http"):
            raise UsageError(f"unknown backend {self.backend!r}")
        lo, hi = self.length_range
        if not 1 <= lo <= hi:
            raise UsageError(f"invalid length range {self.length_range}")


def _decode_from(obj: dict[str, Any], base: DecodeConfig) -> DecodeConfig:
    return replace(base, **obj)


def load_run_config(path: str | None) -> RunConfig:
    cfg = RunConfig()
    if not path:
        return cfg
    with open(path, encoding="utf-8") as fh:
        raw = json.load(fh)
    known = {f.name for f in fields(RunConfig)}
    for key, value in raw.items():
        if key not in known:
            raise UsageError(f"unknown config key {key!r}")
        if key == "decode":
            cfg.decode = _decode_from(value, cfg.decode)
        elif key == "runs":
            continue
        elif key == "length_range":
            cfg.length_range = (int(value[0]), int(value[1]))
        else:
            setattr(cfg, key, value)
    for run in raw.get("runs", []):
        run = dict(run)
        label = run.pop("label")
        cfg.runs.append((label, _decode_from(run, cfg.decode)))
    return cfg


# --------------------------------------------------------------------------
# plumbing
# --------------------------------------------------------------------------


def build_backend(cfg: RunConfig) -> LanguageModel:
    if cfg.backend == "scripted":
        return ScriptedBackend.from_json(cfg.rules_path)  # type: ignore[arg-type]
    return HttpCompletionBackend(cfg.endpoint, cfg.model, os.environ.get(cfg.api_key_env))  # type: ignore[arg-type]


def build_retriever(cfg: RunConfig) -> tuple[Retriever, DocumentStore]:
    if cfg.index_path:
        index = BM25Index.load(cfg.index_path)
    else:
        index = BM25Index.build(load_corpus_checked(cfg.corpus_path))  # type: ignore[arg-type]
    if cfg.retriever_url:
        return HttpRetriever(cfg.retriever_url, index.store), index.store
    return index, index.store


def load_corpus_checked(path: str) -> list:
    docs, seen = [], set()
    for lineno, doc in read_corpus(path):
        if doc.doc_id in seen:
            raise DuplicateDocumentError(doc.doc_id, lineno)
        seen.add(doc.doc_id)
        docs.append(doc)
    if not docs:
        raise RetrievalError(f"{path}: corpus is empty")
    return docs


def read_dataset(path: str) -> list[QAInstance]:
    """Parse a QA JSONL file; repeated (query, dataset_id) rows are kept once."""
    out: list[QAInstance] = []
    seen: set[str] = set()
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                qa = QAInstance.from_dict(json.loads(line))
            except (json.JSONDecodeError, KeyError, ValueError) as exc:
                raise UsageError(f"{path}: malformed dataset line {lineno}: {exc}") from exc
            if qa.instance_id in seen:
                logger.warning("%s: line %d repeats an earlier instance; skipped", path, lineno)
                continue
            seen.add(qa.instance_id)
            out.append(qa)
    return out


def _dumps(obj: Any) -> str:
    return json.dumps(obj, ensure_ascii=False, sort_keys=True)


def read_done_ids(path: Path) -> list[str]:
    """Ids of complete lines in a JSONL output; a torn trailing line is dropped from disk."""
    if not path.exists():
        return []
    good, ids = [], []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            try:
                obj = json.loads(line)
            except json.JSONDecodeError:
                break
            if not line.endswith("\n"):
                break
            good.append(line)
            ids.append(obj["id"])
    with open(path, "w", encoding="utf-8") as fh:
        fh.writelines(good)
    return ids


def write_meta(out_dir: Path, command: str, cfg: Any, started: float, extra: dict | None = None) -> None:
    meta = {
        "version": __version__,
        "started_at": time.strftime("%Y-%m-%dT%H:%M:%S", time.localtime(started)),
        "finished_at": time.strftime("%Y-%m-%dT%H:%M:%S"),
        "elapsed_sec": round(time.time() - started, 3),
        "config": _jsonable(cfg),
    }
    meta.update(extra or {})
    # one file per output directory; each command keeps its own entry
    path = out_dir / META_FILE
    merged = json.loads(path.read_text(encoding="utf-8")) if path.exists() else {}
    merged[command] = meta
    path.write_text(json.dumps(merged, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def _jsonable(obj: Any) -> Any:
    if hasattr(obj, "__dataclass_fields__"):
        return {k: _jsonable(v) for k, v in asdict(obj).items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    return obj


def ordered_map(fn: Callable[[Any], Any], items: Sequence[Any], workers: int) -> Iterator[Any]:
    """Apply ``fn`` with a worker pool; results come back in input order."""
    if workers <= 1:
        for item in items:
            yield fn(item)
        return
    with ThreadPoolExecutor(max_workers=workers) as pool:
        yield from pool.map(fn, items)


# --------------------------------------------------------------------------
# commands
# --------------------------------------------------------------------------


def cmd_index(corpus_path: str, index_path: str) -> int:
    docs = load_corpus_checked(corpus_path)
    index = BM25Index.build(docs)
    index.save(index_path)
    print(f"indexed {len(index)} documents")
    return 0


def cmd_sample(cfg: RunConfig) -> int:
    cfg.validate()
    started = time.time()
    out_dir = Path(cfg.output_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    backend = build_backend(cfg)
    retriever, _ = build_retriever(cfg)
    tasks = load_task_descriptions(cfg.task_table_path)
    dataset = read_dataset(cfg.dataset_path)  # type: ignore[arg-type]

    aug_path, train_path, err_path = (
        out_dir / "augmented.jsonl",
        out_dir / "training.jsonl",
        out_dir / "errors_sample.jsonl",
    )
    done: set[str] = set()
    if cfg.resume:
        done = set(read_done_ids(aug_path))
        # training lines of an instance whose augmented line never landed are dropped
        if train_path.exists():
            kept = [l for l in train_path.read_text(encoding="utf-8").splitlines(True) if json.loads(l)["id"] in done]
            train_path.write_text("".join(kept), encoding="utf-8")
    else:
        for p in (aug_path, train_path, err_path):
            p.unlink(missing_ok=True)
    todo = [qa for qa in dataset if qa.instance_id not in done]

    def work(qa: QAInstance) -> tuple[QAInstance, Any]:
        try:
            return qa, _sample_one(qa, cfg, backend, retriever, tasks)
        except CapabilityError:
            raise
        except CoragError as exc:
            return qa, exc

    per_dataset: Counter[str] = Counter()
    accepted: Counter[str] = Counter()
    n_errors = 0
    with open(aug_path, "a", encoding="utf-8") as aug_fh, open(train_path, "a", encoding="utf-8") as train_fh, open(
        err_path, "a", encoding="utf-8"
    ) as err_fh:
        for qa, result in ordered_map(work, todo, cfg.workers):
            if isinstance(result, Exception):
                n_errors += 1
                err_fh.write(_dumps({"id": qa.instance_id, "query": qa.query, "error": f"{type(result).__name__}: {result}"}) + "\n")
                continue
            aug_line, train_lines = result
            for t in train_lines:
                train_fh.write(_dumps(t) + "\n")
            train_fh.flush()
            aug_fh.write(_dumps(aug_line) + "\n")
            aug_fh.flush()
            per_dataset[qa.dataset_id] += 1
            accepted[qa.dataset_id] += aug_line["termination"] in ("answer_match", "likelihood")

    for ds in sorted(per_dataset):
        rate = accepted[ds] / per_dataset[ds]
        print(f"{ds}: {per_dataset[ds]} augmented, acceptance rate {rate:.3f}")
    if n_errors:
        print(f"{n_errors} instance(s) failed; see {err_path}", file=sys.stderr)
    write_meta(out_dir, "sample", cfg, started, {"skipped_resumed": len(done)})
    return 0


def _sample_one(qa: QAInstance, cfg: RunConfig, backend: LanguageModel, retriever: Retriever, tasks) -> tuple[dict, list[dict]]:
    trace = RunTrace()
    lm = CachedScorer(trace.wrap_lm(backend))
    ret = trace.wrap_retriever(retriever)
    seed = derive_seed(cfg.seed, qa.instance_id)
    task = get_task(qa.dataset_id, tasks)
    final_ranking = ret.search(qa.query, cfg.final_k)
    final_docs = tuple(ret.get(d) for d in final_ranking.doc_ids)
    chains = sample_chains(
        qa,
        lm,
        ret,
        cfg.max_chains,
        cfg.length_range,
        task=task,
        seed=seed,
        subquery_temperature=cfg.sample_temperature,
        step_k=cfg.step_k,
        final_k=cfg.final_k,
        final_docs=final_docs,
    )
    aug = select_best_chain(chains, qa, lm, final_docs=final_docs, final_ranking=final_ranking)
    training = emit_training_instances(aug, cfg.subtask_sample_ratio, derive_seed(seed, "emit"))
    line = {
        "id": qa.instance_id,
        "dataset_id": qa.dataset_id,
        "answers": list(qa.answers),
        "n_sampled_chains": len(chains),
        "prefix_logprobs": list(aug.prefix_logprobs),
        **chain_to_dict(aug.chain, trace),
    }
    line["final_doc_ids"] = final_ranking.doc_ids
    line["final_doc_scores"] = [s for _, s in final_ranking]
    return line, [{"id": qa.instance_id, **t.to_dict()} for t in training]


def fused_ranking(chain) -> RankedList:
    lists = [s.retrieved for s in chain.steps]
    if chain.final_retrieved is not None:
        lists.append(chain.final_retrieved)
    return rrf_merge(lists) if lists else RankedList()


def cmd_decode(cfg: RunConfig) -> int:
    cfg.validate()
    started = time.time()
    out_dir = Path(cfg.output_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    backend = build_backend(cfg)
    retriever, _ = build_retriever(cfg)
    tasks = load_task_descriptions(cfg.task_table_path)
    dataset = read_dataset(cfg.dataset_path)  # type: ignore[arg-type]
    runs = cfg.runs or [(default_label(cfg.decode), cfg.decode)]
    labels = [label for label, _ in runs]
    if len(set(labels)) != len(labels):
        raise UsageError(f"duplicate run labels: {labels}")

    err_path = out_dir / "errors_decode.jsonl"
    if not cfg.resume:
        err_path.unlink(missing_ok=True)
    n_errors = 0
    for label, dcfg in runs:
        path = out_dir / f"results_{label}.jsonl"
        done = set(read_done_ids(path)) if cfg.resume else set()
        if not cfg.resume:
            path.unlink(missing_ok=True)
        todo = [qa for qa in dataset if qa.instance_id not in done]

        def work(qa: QAInstance, dcfg: DecodeConfig = dcfg) -> tuple[QAInstance, Any]:
            try:
                return qa, _decode_one(qa, dcfg, backend, retriever, tasks, cfg)
            except CapabilityError:
                raise
            except CoragError as exc:
                return qa, exc

        scores = []
        with open(path, "a", encoding="utf-8") as fh, open(err_path, "a", encoding="utf-8") as err_fh:
            for qa, result in ordered_map(work, todo, cfg.workers):
                if isinstance(result, Exception):
                    n_errors += 1
                    err_fh.write(
                        _dumps({"id": qa.instance_id, "run": label, "query": qa.query, "error": f"{type(result).__name__}: {result}"}) + "\n"
                    )
                    continue
                fh.write(_dumps(result) + "\n")
                fh.flush()
                scores.append(result["em"])
        em = 100.0 * sum(scores) / len(scores) if scores else float("nan")
        print(f"{label}: {len(scores)} decoded, EM {em:.1f} -> {path}")
    if n_errors:
        print(f"{n_errors} instance(s) failed; see {err_path}", file=sys.stderr)
    write_meta(out_dir, "decode", cfg, started)
    return 0


def default_label(d: DecodeConfig) -> str:
    if d.strategy == "greedy":
        return f"greedy_L{d.max_length_L}"
    if d.strategy == "best_of_n":
        return f"best_of_{d.n_chains_N}_L{d.max_length_L}"
    return f"tree_L{d.max_length_L}"


def _decode_one(qa: QAInstance, dcfg: DecodeConfig, backend, retriever, tasks, cfg: RunConfig) -> dict:
    dcfg = replace(dcfg, seed=derive_seed(dcfg.seed, cfg.seed, qa.instance_id), step_k=cfg.step_k, final_k=cfg.final_k)
    outcome = decode(qa.query, get_task(qa.dataset_id, tasks), dcfg, backend, retriever)
    chain, trace = outcome.chain, outcome.trace
    pred = chain.final_answer or ""
    return {
        "id": qa.instance_id,
        "query": qa.query,
        "dataset_id": qa.dataset_id,
        "prediction": pred,
        "golds": list(qa.answers),
        "em": exact_match(pred, qa.answers),
        "f1": f1(pred, qa.answers),
        "tokens": {"prompt": trace.prompt_tokens, "generated": trace.generated_tokens},
        "retriever_calls": trace.retriever_calls,
        "doc_ids_fused": fused_ranking(chain).doc_ids,
        "n_candidates": len(outcome.all_candidates),
        "chain": chain_to_dict(chain, trace),
    }


def summarize_results(
    rows: list[dict], store: DocumentStore | None, n_resamples: int, level: float, seed: int
) -> dict[str, Any]:
    if not rows:
        raise UsageError("results file is empty")
    n = len(rows)
    ems = [float(r["em"]) for r in rows]
    summary: dict[str, Any] = {
        "n": n,
        "em": 100.0 * sum(ems) / n,
        "f1": 100.0 * sum(float(r["f1"]) for r in rows) / n,
        "avg_tokens": sum(r["tokens"]["prompt"] + r["tokens"]["generated"] for r in rows) / n,
    }
    for k in RECALL_KS:
        if store is None:
            summary[f"recall@{k}"] = None
        else:
            hits = [
                recall_at_k(RankedList(tuple((d, 0.0) for d in r["doc_ids_fused"])), r["golds"], store, k) for r in rows
            ]
            summary[f"recall@{k}"] = 100.0 * sum(hits) / n
    low, high = bootstrap_ci([100.0 * e for e in ems], n_resamples, level, seed)
    summary["ci"] = {"low": low, "high": high, "level": level, "metric": "em"}
    return summary


def cmd_eval(
    results_paths: Sequence[str],
    out_dir: str,
    *,
    corpus_path: str | None = None,
    index_path: str | None = None,
    n_resamples: int = 1000,
    level: float = 0.95,
    seed: int = 0,
) -> int:
    started = time.time()
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    store = None
    if index_path:
        store = BM25Index.load(index_path).store
    elif corpus_path:
        store = DocumentStore(load_corpus_checked(corpus_path))

    points: list[ScorePoint] = []
    for path in results_paths:
        label = Path(path).stem.removeprefix("results_")
        with open(path, encoding="utf-8") as fh:
            rows = [json.loads(l) for l in fh if l.strip()]
        summary = summarize_results(rows, store, n_resamples, level, seed)
        summary["label"] = label
        (out / f"summary_{label}.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n", encoding="utf-8")
        points.append(ScorePoint(summary["avg_tokens"], summary["em"], label))
        ci = summary["ci"]
        print(f"{label}: EM {summary['em']:.1f} [{ci['low']:.1f}, {ci['high']:.1f}] F1 {summary['f1']:.1f} avg tokens {summary['avg_tokens']:.1f}")

    frontier = pareto_frontier(points)
    on_front = {id(p) for p in frontier}
    fit = None
    if len({p.avg_tokens for p in frontier}) >= 3:
        fit = fit_log_linear(frontier)
    else:
        msg = f"only {len(frontier)} Pareto point(s); log-linear fit skipped"
        logger.warning(msg)
        print(f"warning: {msg}", file=sys.stderr)
    with open(out / "curve.csv", "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["label", "avg_tokens", "metric", "is_pareto", "fit_a", "fit_b", "fit_c"])
        for p in points:
            fit_cols = [repr(fit.a), repr(fit.b), repr(fit.c)] if fit else ["", "", ""]
            writer.writerow([p.label, repr(p.avg_tokens), repr(p.metric_value), int(id(p) in on_front), *fit_cols])
    write_meta(out, "eval", {"results": list(results_paths), "n_resamples": n_resamples, "level": level, "seed": seed}, started)
    return 0


# --------------------------------------------------------------------------
# argument parsing
# --------------------------------------------------------------------------


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="JSON run config; flags override its values")
    p.add_argument("--dataset", dest="dataset_path")
    p.add_argument("--corpus", dest="corpus_path")
    p.add_argument("--index", dest="index_path")
    p.add_argument("--task-table", dest="task_table_path")
    p.add_argument("--backend", choices=["scripted", "http"])
    p.add_argument("--rules", dest="rules_path", help="scripted backend rule file")
    p.add_argument("--endpoint", help="base URL of a completions endpoint, e.g. http://host:8000/v1")
    p.add_argument("--model")
    p.add_argument("--api-key-env", dest="api_key_env")
    p.add_argument("--retriever-url", dest="retriever_url")
    p.add_argument("--output-dir", "-o", dest="output_dir")
    p.add_argument("--seed", type=int)
    p.add_argument("--workers", type=int)
    p.add_argument("--resume", action="store_true", default=None)
    p.add_argument("--step-k", dest="step_k", type=int)
    p.add_argument("--final-k", dest="final_k", type=int)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="corag", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("index", help="build and persist a BM25 index")
    p.add_argument("--corpus", required=True)
    p.add_argument("--index", required=True, help="output index path")

    p = sub.add_parser("sample", help="rejection-sample retrieval chains and emit training data")
    _add_common(p)
    p.add_argument("--max-chains", dest="max_chains", type=int)
    p.add_argument("--min-length", type=int)
    p.add_argument("--max-length", type=int)
    p.add_argument("--ratio", dest="subtask_sample_ratio", type=float)
    p.add_argument("--temperature", dest="sample_temperature", type=float)

    p = sub.add_parser("decode", help="decode a dataset with one or more strategies")
    _add_common(p)
    p.add_argument("--strategy", choices=["greedy", "best_of_n", "tree_search"])
    p.add_argument("--L", dest="max_length_L", type=int)
    p.add_argument("--N", dest="n_chains_N", type=int)
    p.add_argument("--temperature", dest="subquery_temperature", type=float)
    p.add_argument("--expansion-size", dest="expansion_size", type=int)
    p.add_argument("--rollouts", dest="n_rollouts", type=int)
    p.add_argument("--rollout-depth", dest="rollout_depth", type=int)
    p.add_argument("--stop-bias", dest="stop_bias", type=float)
    p.add_argument("--label", help="results file label (single-run mode)")

    p = sub.add_parser("eval", help="summaries, bootstrap CIs and the tokens/EM curve")
    p.add_argument("results", nargs="+")
    p.add_argument("--output-dir", "-o", required=True)
    p.add_argument("--corpus", help="corpus for answer-match recall")
    p.add_argument("--index", help="index whose documents serve answer-match recall")
    p.add_argument("--n-resamples", type=int, default=1000)
    p.add_argument("--level", type=float, default=0.95)
    p.add_argument("--seed", type=int, default=0)
    return parser


_RUN_FIELDS = {f.name for f in fields(RunConfig)}
_DECODE_FIELDS = {f.name for f in fields(DecodeConfig)}


def resolve_config(args: argparse.Namespace) -> RunConfig:
    cfg = load_run_config(args.config)
    flags = {k: v for k, v in vars(args).items() if v is not None}
    decode_over = {k: v for k, v in flags.items() if k in _DECODE_FIELDS and k not in ("seed", "step_k", "final_k")}
    for key, value in flags.items():
        if key in _RUN_FIELDS and key not in ("decode", "runs"):
            setattr(cfg, key, value)
    lo, hi = cfg.length_range
    cfg.length_range = (flags.get("min_length", lo), flags.get("max_length", hi))
    if args.command == "decode":
        if decode_over:
            cfg.decode = replace(cfg.decode, **decode_over)
            cfg.runs = [(label, replace(d, **decode_over)) for label, d in cfg.runs]
        if getattr(args, "label", None):
            cfg.runs = [(args.label, cfg.decode)]
    return cfg


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "index":
            return cmd_index(args.corpus, args.index)
        if args.command == "eval":
            return cmd_eval(
                args.results,
                args.output_dir,
                corpus_path=args.corpus,
                index_path=args.index,
                n_resamples=args.n_resamples,
                level=args.level,
                seed=args.seed,
            )
        cfg = resolve_config(args)
        if args.command == "sample":
            return cmd_sample(cfg)
        return cmd_decode(cfg)
    except CapabilityError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (CoragError, UsageError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
