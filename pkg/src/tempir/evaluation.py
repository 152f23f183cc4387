"""nDCG scoring, aggregation, relative drop and TREC file IO.

Run files are ``qid Q0 docid rank score tag`` (score printed with six
decimals); qrels are ``qid 0 docid grade``.
"""

from __future__ import annotations

import csv
import math
from collections import defaultdict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

GAINS = ("linear", "exp")


class FormatError(ValueError):
    """Malformed TREC line or inconsistent ranking."""


@dataclass(frozen=True)
class RunEntry:
    qid: str
    doc_id: str
    rank: int
    score: float
    tag: str


@dataclass(frozen=True)
class QrelEntry:
    qid: str
    doc_id: str
    grade: int


# ---------------------------------------------------------------- file IO

def read_run(path: str | Path) -> list[RunEntry]:
    """Parse a run file; ranks must count up from 1 within each qid."""
    entries = []
    last_rank: dict[str, int] = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            cols = line.split()
            if len(cols) != 6:
                raise FormatError(f"{path}:{lineno}: expected 6 columns, got {len(cols)}")
            qid, _, doc_id, rank_s, score_s, tag = cols
            try:
                rank, score = int(rank_s), float(score_s)
            except ValueError:
                raise FormatError(f"{path}:{lineno}: bad rank or score") from None
            expected = last_rank.get(qid, 0) + 1
            if rank != expected:
                raise FormatError(f"{path}:{lineno}: rank gap for {qid}: expected {expected}, got {rank}")
            last_rank[qid] = rank
            entries.append(RunEntry(qid, doc_id, rank, score, tag))
    return entries


def format_run_line(e: RunEntry) -> str:
    return f"{e.qid} Q0 {e.doc_id} {e.rank} {e.score:.6f} {e.tag}\n"


def write_run(entries: Iterable[RunEntry], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.writelines(format_run_line(e) for e in entries)


def read_qrels(path: str | Path) -> list[QrelEntry]:
    out = []
    seen = set()
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            cols = line.split()
            if len(cols) != 4:
                raise FormatError(f"{path}:{lineno}: expected 4 columns, got {len(cols)}")
            qid, _, doc_id, grade_s = cols
            try:
                grade = int(grade_s)
            except ValueError:
                raise FormatError(f"{path}:{lineno}: bad grade {grade_s!r}") from None
            if grade < 0:
                raise FormatError(f"{path}:{lineno}: negative grade")
            if (qid, doc_id) in seen:
                raise FormatError(f"{path}:{lineno}: duplicate judgment for ({qid}, {doc_id})")
            seen.add((qid, doc_id))
            out.append(QrelEntry(qid, doc_id, grade))
    return out


def write_qrels(qrels: Iterable[QrelEntry], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for q in qrels:
            fh.write(f"{q.qid} 0 {q.doc_id} {q.grade}\n")


def qrels_by_qid(qrels: Iterable[QrelEntry]) -> dict[str, dict[str, int]]:
    out: dict[str, dict[str, int]] = defaultdict(dict)
    for q in qrels:
        out[q.qid][q.doc_id] = q.grade
    return dict(out)


def run_by_qid(run: Iterable[RunEntry]) -> dict[str, list[RunEntry]]:
    out: dict[str, list[RunEntry]] = defaultdict(list)
    for e in run:
        out[e.qid].append(e)
    for entries in out.values():
        entries.sort(key=lambda e: e.rank)
    return dict(out)


# ---------------------------------------------------------------- metrics

def _gain(g: float, gain: str) -> float:
    if gain == "linear":
        return g
    if gain == "exp":
        return 2.0 ** g - 1.0
    raise ValueError(f"unknown gain {gain!r}")


def dcg_at_k(gains: Sequence[float], k: int, gain: str = "linear") -> float:
    if k < 1:
        raise ValueError("k must be >= 1")
    total = 0.0
    for i, g in enumerate(gains[:k], 1):
        total += _gain(g, gain) / math.log2(i + 1)
    return total


def ndcg_at_k(run: Sequence[RunEntry], qrels: Mapping[str, int] | Iterable[QrelEntry],
              k: int = 10, gain: str = "linear") -> float:
    """nDCG@k of one query's ranking.

    ``qrels`` is either a doc -> grade mapping for the query or an iterable
    of QrelEntry (filtered to the run's qid).  Unjudged documents have gain
    0; the ideal ranking sorts every judged grade for the query.
    """
    ranked = sorted(run, key=lambda e: e.rank)
    if not isinstance(qrels, Mapping):
        qid = ranked[0].qid if ranked else None
        qrels = {q.doc_id: q.grade for q in qrels if q.qid == qid}
    ideal = dcg_at_k(sorted(qrels.values(), reverse=True), k, gain)
    if ideal <= 0.0:
        return 0.0
    gains, seen = [], set()
    for e in ranked[:k]:
        # a repeated document earns nothing, keeping nDCG <= 1
        gains.append(0 if e.doc_id in seen else qrels.get(e.doc_id, 0))
        seen.add(e.doc_id)
    return dcg_at_k(gains, k, gain) / ideal


def aggregate(scores: Sequence[float]) -> tuple[float, float]:
    """Mean and sample standard deviation (zero for a single score)."""
    n = len(scores)
    if n == 0:
        raise ValueError("cannot aggregate an empty score list")
    mean = math.fsum(scores) / n
    if n == 1:
        return mean, 0.0
    var = math.fsum((s - mean) ** 2 for s in scores) / (n - 1)
    return mean, math.sqrt(var)


def relative_ndcg_drop(ndcg_a: float, ndcg_b: float) -> float:
    """Fractional drop from reference ``ndcg_a`` to ``ndcg_b``; negative is an improvement."""
    if ndcg_a == 0:
        raise ZeroDivisionError("reference nDCG is zero; relative drop undefined")
    return (ndcg_a - ndcg_b) / ndcg_a


# ---------------------------------------------------------------- reports

@dataclass
class EvalReport:
    experiment: str
    snapshot: str
    k: int
    per_query: dict[str, float] = field(default_factory=dict)

    @property
    def n_queries(self) -> int:
        return len(self.per_query)

    @property
    def mean(self) -> float:
        return aggregate(list(self.per_query.values()))[0]

    @property
    def std(self) -> float:
        return aggregate(list(self.per_query.values()))[1]


def evaluate_run(run: Iterable[RunEntry], qrels: Iterable[QrelEntry], k: int = 10,
                 gain: str = "linear", experiment: str = "", snapshot: str = "",
                 queries: Iterable[str] | None = None) -> EvalReport:
    """Score every judged query (or the given ``queries``) of a run.

    Judged queries missing from the run score 0; run queries without
    judgments are ignored unless listed in ``queries``.
    """
    judged = qrels_by_qid(qrels)
    by_q = run_by_qid(run)
    qids = sorted(judged) if queries is None else list(queries)
    report = EvalReport(experiment, snapshot, k)
    for qid in qids:
        report.per_query[qid] = ndcg_at_k(by_q.get(qid, []), judged.get(qid, {}), k, gain)
    return report


REPORT_COLUMNS = ("experiment", "snapshot", "n_queries", "mean_ndcg", "std_ndcg")


def write_report(reports: Iterable[EvalReport], path: str | Path,
                 per_query_path: str | Path | None = None) -> None:
    reports = list(reports)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(REPORT_COLUMNS)
        for r in reports:
            if r.n_queries:
                w.writerow([r.experiment, r.snapshot, r.n_queries, f"{r.mean:.6f}", f"{r.std:.6f}"])
            else:
                w.writerow([r.experiment, r.snapshot, 0, "NULL", "NULL"])
    if per_query_path is not None:
        with open(per_query_path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(("experiment", "snapshot", "qid", "ndcg"))
            for r in reports:
                for qid, v in r.per_query.items():
                    w.writerow([r.experiment, r.snapshot, qid, f"{v:.6f}"])


def read_report_matrix(path: str | Path) -> dict[str, dict[str, float | None]]:
    """Load a report CSV into ``{snapshot: {experiment: mean or None}}``."""
    matrix: dict[str, dict[str, float | None]] = defaultdict(dict)
    with open(path, newline="", encoding="utf-8") as fh:
        for row in csv.DictReader(fh):
            v = row["mean_ndcg"]
            matrix[row["snapshot"]][row["experiment"]] = None if v in ("", "NULL") else float(v)
    return dict(matrix)
