"""Experiment runner: expansion -> search -> rerank -> evaluation over snapshots.

The experiment name selects the stages: ``-expanded`` adds query
expansion before search and ``-reranked`` adds reranking after it.
Every stage output is stored under ``<out>/.cache/<stage>/<key>`` where
the key hashes the stage name, its settings and the hashes of its
inputs, so a rerun with unchanged inputs recomputes nothing.
"""

from __future__ import annotations

import csv
import hashlib
import json
import logging
import shutil
import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

from .analyzer import AnalyzerConfig, analyzer_from_kv, load_analyzer_config
from .collection import Query, read_queries
from .corpus import Store
from .evaluation import (EvalReport, aggregate, evaluate_run, qrels_by_qid, read_qrels,
                         read_run, relative_ndcg_drop, write_report, write_run)
from .expand import DEFAULT_CONCURRENCY, Expander, expand_batch, load_provider_config
from .index import Bm25Params, InvertedIndex, build_index, search_all
from .kvconfig import ConfigError, as_list, read_kv
from .rerank import load_scorer_config, rerank_run

log = logging.getLogger(__name__)

EXPERIMENTS = ("bm25", "bm25-expanded", "bm25-reranked", "bm25-expanded-reranked")


def stages_for(experiment: str) -> tuple[bool, bool]:
    """``(expand, rerank)`` flags implied by an experiment name."""
    if experiment not in EXPERIMENTS:
        raise ConfigError(f"unknown experiment {experiment!r}; choose from {EXPERIMENTS}")
    return "-expanded" in experiment, experiment.endswith("-reranked")


@dataclass
class ExperimentConfig:
    experiments: list[str]
    store: Path
    queries: Path
    qrels: str
    out: Path
    snapshots: list[str] = field(default_factory=list)
    k: int = 100
    cutoff: int = 10
    gain: str = "linear"
    analyzer: AnalyzerConfig = field(default_factory=AnalyzerConfig)
    params: Bm25Params = field(default_factory=Bm25Params)
    provider: Path | None = None
    scorer: Path | None = None
    expansion_cache: Path | None = None
    workers: int = 1
    concurrency: int = DEFAULT_CONCURRENCY
    seed: int = 0

    def __post_init__(self):
        for e in self.experiments:
            expand, rerank = stages_for(e)
            if expand and self.provider is None:
                raise ConfigError(f"{e} needs a provider config")
            if rerank and self.scorer is None:
                raise ConfigError(f"{e} needs a scorer config")
        if not self.experiments:
            raise ConfigError("no experiments configured")

    def qrels_path(self, snapshot: str) -> Path:
        return Path(self.qrels.replace("{snapshot}", snapshot))


def load_experiment_config(path: str | Path) -> ExperimentConfig:
    """Read a ``key = value`` experiment file; paths are relative to it.

    ``experiment`` (one name) or ``experiments`` (comma list) is required,
    as are ``store``, ``queries`` and ``qrels`` (may contain ``{snapshot}``).
    """
    path = Path(path)
    kv = read_kv(path)
    base = path.parent

    def p(key, default=None):
        v = kv.get(key, default)
        if v in (None, ""):
            return None
        q = Path(v)
        return q if q.is_absolute() else base / q

    for key in ("store", "queries", "qrels"):
        if key not in kv:
            raise ConfigError(f"{path}: missing required key {key!r}")
    exps = as_list(kv.get("experiments", kv.get("experiment", "")))
    if "analyzer" in kv:
        analyzer = load_analyzer_config(p("analyzer"))
    else:
        analyzer = analyzer_from_kv({k[9:]: v for k, v in kv.items() if k.startswith("analyzer_")}, base)
    qrels = kv["qrels"]
    if not Path(qrels).is_absolute():
        qrels = str(base / qrels)
    try:
        return ExperimentConfig(
            experiments=exps,
            store=p("store"),
            queries=p("queries"),
            qrels=qrels,
            out=p("out", "out"),
            snapshots=as_list(kv.get("snapshots", "")),
            k=int(kv.get("k", 100)),
            cutoff=int(kv.get("cutoff", 10)),
            gain=kv.get("gain", "linear"),
            analyzer=analyzer,
            params=Bm25Params(float(kv.get("bm25_k1", 0.9)), float(kv.get("bm25_b", 0.4))),
            provider=p("provider"),
            scorer=p("scorer"),
            expansion_cache=p("expansion_cache"),
            workers=int(kv.get("workers", 1)),
            concurrency=int(kv.get("concurrency", DEFAULT_CONCURRENCY)),
            seed=int(kv.get("seed", 0)),
        )
    except ValueError as exc:
        raise ConfigError(f"{path}: {exc}") from None


# ---------------------------------------------------------------- hashing

def file_sha256(path: str | Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def stage_key(stage: str, settings: dict, inputs: list[str]) -> str:
    blob = json.dumps({"stage": stage, "settings": settings, "inputs": inputs}, sort_keys=True)
    return hashlib.sha256(blob.encode()).hexdigest()[:24]


def _queries_digest(queries: list[Query]) -> str:
    return hashlib.sha256("\n".join(f"{q.qid}\t{q.text}" for q in queries).encode()).hexdigest()


class StageCache:
    """``<root>/<stage>/<key>/`` directories, published atomically by rename."""

    def __init__(self, root: Path):
        self.root = root
        self.counts: dict[str, dict[str, int]] = {}
        self._lock = threading.Lock()

    def _count(self, stage: str, what: str) -> None:
        with self._lock:
            c = self.counts.setdefault(stage, {"computed": 0, "cached": 0})
            c[what] += 1

    def get_or_compute(self, stage: str, key: str, compute) -> Path:
        """Return the cached directory for ``key``, running ``compute(tmp_dir)`` if absent."""
        final = self.root / stage / key
        if (final / ".done").exists():
            self._count(stage, "cached")
            return final
        tmp = self.root / stage / f".{key}.{threading.get_ident()}.tmp"
        shutil.rmtree(tmp, ignore_errors=True)
        tmp.mkdir(parents=True)
        try:
            compute(tmp)
        except BaseException:
            shutil.rmtree(tmp, ignore_errors=True)
            raise
        (tmp / ".done").write_text("", encoding="utf-8")
        try:
            tmp.rename(final)
        except OSError:
            shutil.rmtree(tmp, ignore_errors=True)  # another worker published first
        self._count(stage, "computed")
        return final


# ---------------------------------------------------------------- run

@dataclass
class PipelineResult:
    out: Path
    reports: list[EvalReport]
    matrix: dict[str, dict[str, float | None]]
    counts: dict[str, dict[str, int]]
    failures: dict[str, str]


def _expanded_queries(cfg: ExperimentConfig, queries: list[Query], cache: StageCache,
                      expander: Expander) -> list[Query]:
    settings = {"provider": expander.config.describe()}
    key = stage_key("expand", settings, [_queries_digest(queries)])

    def compute(tmp: Path):
        exp_cache = cfg.expansion_cache or (cfg.out / "expansions.jsonl")
        records = expand_batch(expander, queries, exp_cache, cfg.concurrency)
        if records.failed:
            raise RuntimeError(f"expansion failed for {len(records.failed)} query(s)")
        by_q = {r.qid: r.expanded for r in records}
        with open(tmp / "queries.tsv", "w", encoding="utf-8") as fh:
            for q in queries:
                fh.write(f"{q.qid}\t{' '.join(by_q[q.qid].split())}\n")

    d = cache.get_or_compute("expand", key, compute)
    return read_queries(d / "queries.tsv")


def _doc_texts(snapshot, wanted: set[str]) -> dict[str, str]:
    return {d.doc_id: d.text for d in snapshot if d.doc_id in wanted}


def _run_snapshot(cfg: ExperimentConfig, date: str, queries: list[Query], expanded: list[Query] | None,
                  cache: StageCache) -> dict[str, EvalReport]:
    store = Store(cfg.store)
    snap = store.snapshot(date)
    docs_hash = file_sha256(snap.docs_path)
    idx_key = stage_key("index", {"analyzer": cfg.analyzer.to_dict()}, [docs_hash])
    idx_dir = cache.get_or_compute("index", idx_key, lambda tmp: build_index(snap, cfg.analyzer, tmp))
    index = None
    qrels = read_qrels(cfg.qrels_path(date))
    qrels_hash = file_sha256(cfg.qrels_path(date))
    judged = qrels_by_qid(qrels)
    eval_qids = [q.qid for q in queries if q.qid in judged]
    reports = {}

    for exp in cfg.experiments:
        do_expand, do_rerank = stages_for(exp)
        qset = expanded if do_expand else queries
        first_tag = "bm25-expanded" if do_expand else "bm25"
        s_settings = {"k": cfg.k, "k1": cfg.params.k1, "b": cfg.params.b, "tag": first_tag}
        s_key = stage_key("search", s_settings, [idx_key, _queries_digest(qset)])

        def do_search(tmp: Path, qset=qset, tag=first_tag):
            nonlocal index
            if index is None:
                index = InvertedIndex.load(idx_dir, cfg.analyzer)
            write_run(search_all(index, qset, cfg.k, cfg.params, tag), tmp / "run.txt")

        run_dir = cache.get_or_compute("search", s_key, do_search)
        run_key = s_key
        if do_rerank:
            scorer = load_scorer_config(cfg.scorer, cfg.analyzer, snapshot=date)
            r_key = stage_key("rerank", {"scorer": scorer.describe(), "tag": exp}, [s_key, docs_hash])

            def do_rerank_stage(tmp: Path, run_dir=run_dir, scorer=scorer, exp=exp):
                run = read_run(run_dir / "run.txt")
                texts = _doc_texts(snap, {e.doc_id for e in run})
                # rerank against the text that was searched with
                write_run(rerank_run(scorer, qset, run, texts, exp, cfg.concurrency), tmp / "run.txt")

            run_dir = cache.get_or_compute("rerank", r_key, do_rerank_stage)
            run_key = r_key

        e_key = stage_key("eval", {"cutoff": cfg.cutoff, "gain": cfg.gain, "exp": exp, "date": date},
                          [run_key, qrels_hash, _queries_digest(queries)])

        def do_eval(tmp: Path, run_dir=run_dir, exp=exp):
            rep = evaluate_run(read_run(run_dir / "run.txt"), qrels, cfg.cutoff, cfg.gain, exp, date, eval_qids)
            write_report([rep], tmp / "report.csv", tmp / "per_query.csv")

        eval_dir = cache.get_or_compute("eval", e_key, do_eval)
        dest = cfg.out / exp / date
        dest.mkdir(parents=True, exist_ok=True)
        for name, src in (("run.txt", run_dir / "run.txt"), ("report.csv", eval_dir / "report.csv"),
                          ("per_query.csv", eval_dir / "per_query.csv")):
            shutil.copyfile(src, dest / name)
        reports[exp] = _read_single_report(eval_dir, exp, date)
    return reports


def _read_single_report(eval_dir: Path, exp: str, date: str) -> EvalReport:
    rep = EvalReport(exp, date, 0)
    with open(eval_dir / "per_query.csv", newline="", encoding="utf-8") as fh:
        for row in csv.DictReader(fh):
            rep.per_query[row["qid"]] = float(row["ndcg"])
    return rep


def run_pipeline(cfg: ExperimentConfig) -> PipelineResult:
    """Run every configured experiment on every snapshot and write the reports.

    A snapshot that fails gets empty (NULL) reports for all experiments
    and the error is recorded in ``manifest.json``; other snapshots carry on.
    """
    cfg.out.mkdir(parents=True, exist_ok=True)
    cache = StageCache(cfg.out / ".cache")
    queries = read_queries(cfg.queries)
    dates = cfg.snapshots or Store(cfg.store).dates()
    if not dates:
        raise ConfigError(f"no snapshots found in {cfg.store}")

    expanded = None
    failures: dict[str, str] = {}
    if any(stages_for(e)[0] for e in cfg.experiments):
        try:
            expanded = _expanded_queries(cfg, queries, cache, Expander(load_provider_config(cfg.provider)))
        except Exception as exc:  # recorded, expanded experiments become NULL
            log.error("expansion stage failed: %s", exc)
            failures["expand"] = str(exc)

    def one(date):
        try:
            sub = cfg
            if expanded is None and "expand" in failures:
                sub = _without_expanded(cfg)
            return date, _run_snapshot(sub, date, queries, expanded, cache), None
        except Exception as exc:  # a failed snapshot becomes a NULL row
            log.error("snapshot %s failed: %s", date, exc)
            return date, {}, str(exc)

    with ThreadPoolExecutor(max(1, cfg.workers)) as pool:
        results = list(pool.map(one, dates))

    reports, matrix = [], {}
    for date, by_exp, err in results:
        if err:
            failures[date] = err
        matrix[date] = {}
        for exp in cfg.experiments:
            rep = by_exp.get(exp, EvalReport(exp, date, cfg.cutoff))
            rep.k = cfg.cutoff
            reports.append(rep)
            matrix[date][exp] = rep.mean if rep.n_queries else None

    write_report(reports, cfg.out / "report.csv", cfg.out / "per_query.csv")
    write_matrix(matrix, cfg.experiments, cfg.out / "matrix.csv")
    write_aggregate(reports, cfg.experiments, cfg.out / "aggregate.csv")
    manifest = {"experiments": cfg.experiments, "snapshots": dates, "stages": cache.counts,
                "failures": failures}
    (cfg.out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n",
                                           encoding="utf-8")
    return PipelineResult(cfg.out, reports, matrix, cache.counts, failures)


def _without_expanded(cfg: ExperimentConfig) -> ExperimentConfig:
    return replace(cfg, experiments=[e for e in cfg.experiments if not stages_for(e)[0]])


# ---------------------------------------------------------------- reports

def _cell(v: float | None) -> str:
    return "NULL" if v is None else f"{v:.6f}"


def write_matrix(matrix: dict[str, dict[str, float | None]], experiments: list[str], path: Path) -> None:
    """Rows are snapshots, columns experiments, cells mean nDCG."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["snapshot"] + list(experiments))
        for date in sorted(matrix):
            w.writerow([date] + [_cell(matrix[date].get(e)) for e in experiments])


def read_matrix(path: str | Path) -> dict[str, dict[str, float | None]]:
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    exps = rows[0][1:]
    return {r[0]: {e: None if v == "NULL" else float(v) for e, v in zip(exps, r[1:])} for r in rows[1:]}


def write_aggregate(reports: list[EvalReport], experiments: list[str], path: Path) -> None:
    """Per experiment: mean and sample std over all (snapshot, query) scores, best first."""
    rows = []
    for exp in experiments:
        scores = [v for r in reports if r.experiment == exp for v in r.per_query.values()]
        if scores:
            mean, std = aggregate(scores)
            rows.append((exp, len(scores), mean, std))
        else:
            rows.append((exp, 0, None, None))
    rows.sort(key=lambda r: (r[2] is None, -(r[2] or 0.0), r[0]))
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("experiment", "n", "mean_ndcg", "std_ndcg"))
        for exp, n, mean, std in rows:
            w.writerow([exp, n, _cell(mean), _cell(std)])


def report_drop(matrix: dict[str, dict[str, float | None]], src: str, dst: str) -> dict[str, float | None]:
    """Relative nDCG drop from snapshot ``src`` to ``dst`` per experiment; NULL cells stay NULL."""
    for d in (src, dst):
        if d not in matrix:
            raise KeyError(f"snapshot {d} not in matrix")
    out = {}
    for exp in matrix[src]:
        a, b = matrix[src].get(exp), matrix[dst].get(exp)
        out[exp] = None if a is None or b is None else relative_ndcg_drop(a, b)
    return out
