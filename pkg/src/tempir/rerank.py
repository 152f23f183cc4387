"""Second-stage reranking of first-stage candidates.

Scorer kinds:

* ``oracle-qrel``: score is the judged grade (0 when unjudged); an upper bound.
* ``lexical-overlap``: fraction of unique query terms present in the document.
* ``remote``: a scoring service taking ``POST {"query", "passages": [...]}``
  and answering ``{"scores": [...]}`` of equal length.  Passages are
  truncated to a character budget first and the budget is appended to the
  run tag.

Any callable ``(query_text, [(doc_id, text), ...]) -> [score, ...]`` may be
passed instead of a ScorerBinding.
"""

from __future__ import annotations

import json
import logging
import time
import urllib.error
import urllib.request
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Mapping, Sequence

from .analyzer import AnalyzerConfig, analyze
from .evaluation import QrelEntry, RunEntry, qrels_by_qid, read_qrels, run_by_qid
from .kvconfig import ConfigError, read_kv

log = logging.getLogger(__name__)

KINDS = ("oracle-qrel", "lexical-overlap", "remote")


class ScorerError(RuntimeError):
    pass


@dataclass
class ScorerBinding:
    kind: str
    endpoint: str = ""
    qrels: dict[str, dict[str, int]] = field(default_factory=dict)
    batch_size: int = 32
    char_budget: int = 2048
    retries: int = 2
    timeout: float = 60.0
    analyzer: AnalyzerConfig = field(default_factory=AnalyzerConfig)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConfigError(f"unknown scorer kind {self.kind!r}; choose from {KINDS}")
        if self.kind == "remote" and not self.endpoint:
            raise ConfigError("remote scorer needs an endpoint")
        if self.batch_size < 1 or self.char_budget < 1:
            raise ConfigError("batch_size and char_budget must be positive")

    def tag_suffix(self) -> str:
        return f"-trunc{self.char_budget}" if self.kind == "remote" else ""

    def describe(self) -> dict:
        d = {"kind": self.kind, "analyzer": self.analyzer.to_dict()}
        if self.kind == "remote":
            d.update(endpoint=self.endpoint, char_budget=self.char_budget, batch_size=self.batch_size)
        if self.kind == "oracle-qrel":
            d["qrels"] = sorted((q, doc, g) for q, docs in self.qrels.items() for doc, g in docs.items())
        return d


def load_scorer_config(path: str | Path, analyzer: AnalyzerConfig | None = None,
                       snapshot: str | None = None) -> ScorerBinding:
    """``kind``, ``endpoint``, ``qrels`` (path relative to the file; ``{snapshot}``
    is substituted), ``batch_size``, ``char_budget``, ``retries``, ``timeout``."""
    path = Path(path)
    kv = read_kv(path)
    qrels = {}
    if kv.get("qrels"):
        qp = Path(kv["qrels"].replace("{snapshot}", snapshot or ""))
        qrels = qrels_by_qid(read_qrels(qp if qp.is_absolute() else path.parent / qp))
    try:
        return ScorerBinding(
            kind=kv.get("kind", ""),
            endpoint=kv.get("endpoint", ""),
            qrels=qrels,
            batch_size=int(kv.get("batch_size", 32)),
            char_budget=int(kv.get("char_budget", 2048)),
            retries=int(kv.get("retries", 2)),
            timeout=float(kv.get("timeout", 60)),
            analyzer=analyzer or AnalyzerConfig(),
        )
    except ValueError as exc:
        raise ConfigError(f"{path}: {exc}") from None


def lexical_overlap_score(query_terms: Iterable[str], doc_terms: Iterable[str]) -> float:
    q = set(query_terms)
    if not q:
        return 0.0
    return len(q & set(doc_terms)) / len(q)


def _remote_scores(binding: ScorerBinding, query: str, passages: list[str]) -> list[float]:
    scores: list[float] = []
    for i in range(0, len(passages), binding.batch_size):
        chunk = [p[:binding.char_budget] for p in passages[i:i + binding.batch_size]]
        body = json.dumps({"query": query, "passages": chunk}).encode()
        err = None
        for attempt in range(binding.retries + 1):
            req = urllib.request.Request(binding.endpoint, data=body, method="POST",
                                         headers={"Content-Type": "application/json"})
            try:
                with urllib.request.urlopen(req, timeout=binding.timeout) as resp:
                    got = json.loads(resp.read()).get("scores")
                if not isinstance(got, list) or len(got) != len(chunk):
                    raise ScorerError("scorer reply length differs from passage count")
                scores.extend(float(s) for s in got)
                break
            except (urllib.error.URLError, OSError, ValueError, AttributeError, ScorerError) as exc:
                err = exc
                if attempt < binding.retries:
                    time.sleep(min(0.05 * 2 ** attempt, 2.0))
        else:
            raise ScorerError(f"remote scorer failed: {err}")
    return scores


def score_candidates(scorer, qid: str, query: str, docs: list[tuple[str, str]]) -> list[float]:
    if callable(scorer) and not isinstance(scorer, ScorerBinding):
        return list(scorer(query, docs))
    if scorer.kind == "oracle-qrel":
        grades = scorer.qrels.get(qid, {})
        return [float(grades.get(d, 0)) for d, _ in docs]
    if scorer.kind == "lexical-overlap":
        q = analyze(query, scorer.analyzer)
        return [lexical_overlap_score(q, analyze(t, scorer.analyzer)) for _, t in docs]
    return _remote_scores(scorer, query, [t for _, t in docs])


def rerank(scorer, query, candidates: Sequence[RunEntry], doc_texts: Mapping[str, str] | Callable[[str], str],
           tag: str | None = None) -> list[RunEntry]:
    """Re-sort candidates by scorer score, stably; ranks and scores replaced.

    If a remote scorer fails the original order is returned unchanged (with
    the new tag) and a warning is logged.
    """
    cands = sorted(candidates, key=lambda e: e.rank)
    if not cands:
        return []
    qid = getattr(query, "qid", cands[0].qid)
    text = getattr(query, "text", query)
    lookup = doc_texts if callable(doc_texts) else (lambda d: doc_texts.get(d, ""))
    if tag is None:
        tag = cands[0].tag + "-reranked"
    if isinstance(scorer, ScorerBinding):
        tag += scorer.tag_suffix()
    try:
        scores = score_candidates(scorer, qid, text, [(e.doc_id, lookup(e.doc_id)) for e in cands])
    except ScorerError as exc:
        log.warning("rerank of %s failed, keeping first-stage order: %s", qid, exc)
        return [RunEntry(e.qid, e.doc_id, e.rank, e.score, tag) for e in cands]
    order = sorted(range(len(cands)), key=lambda i: -scores[i])
    return [RunEntry(cands[i].qid, cands[i].doc_id, r, scores[i], tag) for r, i in enumerate(order, 1)]


def rerank_run(scorer, queries: Iterable, run: Iterable[RunEntry], doc_texts, tag: str | None = None,
               workers: int = 4) -> list[RunEntry]:
    """Rerank every query of a run; queries without candidates are skipped."""
    by_q = run_by_qid(run)
    qs = [q for q in queries if q.qid in by_q]
    with ThreadPoolExecutor(max(1, workers)) as pool:
        parts = pool.map(lambda q: rerank(scorer, q, by_q[q.qid], doc_texts, tag), qs)
        return [e for part in parts for e in part]


def oracle_scorer(qrels: Iterable[QrelEntry]) -> ScorerBinding:
    return ScorerBinding("oracle-qrel", qrels=qrels_by_qid(qrels))
