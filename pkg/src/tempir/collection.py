"""Dataset-construction procedures: topic/query selection and click-based relevance.

Queries are matched to topics by case-folded substring (or whole-word)
containment, trimmed to the most frequent per topic, filtered by number
of judgments, and judged from cascade-model attractiveness estimates
computed over SERP click logs.
"""

from __future__ import annotations

import json
import re
from collections import Counter, defaultdict
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .evaluation import QrelEntry

MATCH_MODES = ("substring", "word-boundary")
DEFAULT_THRESHOLDS = (1 / 3, 2 / 3)


@dataclass(frozen=True)
class Topic:
    topic_id: int
    text: str

    def __post_init__(self):
        if not self.text.strip():
            raise ValueError(f"topic {self.topic_id} has empty text")


@dataclass(frozen=True)
class Query:
    qid: str
    text: str
    frequency: int = 0


@dataclass
class TopicQueryMap:
    """Per-topic query lists, keyed by topic id."""

    topics: dict[int, Topic]
    queries: dict[int, list[Query]] = field(default_factory=dict)

    def union(self) -> list[Query]:
        """All matched queries, each once, in qid order."""
        seen = {}
        for qs in self.queries.values():
            for q in qs:
                seen.setdefault(q.qid, q)
        return [seen[k] for k in sorted(seen)]

    def qids(self, topic_id: int) -> set[str]:
        return {q.qid for q in self.queries.get(topic_id, [])}


def load_topics(path: str | Path | None = None) -> list[Topic]:
    """Topics from a ``topic_id<TAB>text`` file; the bundled 28 topics by default."""
    if path is None:
        ref = resources.files("tempir") / "data" / "topics.tsv"
        text = ref.read_text(encoding="utf-8")
    else:
        text = Path(path).read_text(encoding="utf-8")
    topics = []
    for line in text.splitlines():
        if line.strip():
            tid, name = line.split("\t", 1)
            topics.append(Topic(int(tid), name.strip()))
    return topics


def _check_unique(queries: Sequence[Query]) -> None:
    dup = [qid for qid, n in Counter(q.qid for q in queries).items() if n > 1]
    if dup:
        raise ValueError(f"duplicate qid(s) in query set: {sorted(dup)[:5]}")


def match_queries_to_topics(queries: Sequence[Query], topics: Sequence[Topic],
                            mode: str = "substring") -> TopicQueryMap:
    """Assign each query to every topic whose text it contains."""
    if not topics:
        raise ValueError("topic set is empty")
    if mode not in MATCH_MODES:
        raise ValueError(f"mode must be one of {MATCH_MODES}")
    _check_unique(queries)
    folded = [(q, q.text.casefold()) for q in queries]
    out = TopicQueryMap({t.topic_id: t for t in topics})
    for t in topics:
        needle = t.text.casefold()
        if mode == "substring":
            hits = [q for q, text in folded if needle in text]
        else:
            pat = re.compile(rf"(?<!\w){re.escape(needle)}(?!\w)")
            hits = [q for q, text in folded if pat.search(text)]
        out.queries[t.topic_id] = hits
    return out


def select_top_k_queries(tq: TopicQueryMap, k: int) -> TopicQueryMap:
    """Keep the ``k`` most frequent queries of each topic (ties by qid)."""
    if k < 1:
        raise ValueError("k must be >= 1")
    out = TopicQueryMap(dict(tq.topics))
    for tid, qs in tq.queries.items():
        out.queries[tid] = sorted(qs, key=lambda q: (-q.frequency, q.qid))[:k]
    return out


def filter_by_assessments(queries: Iterable[Query], qrels: Iterable[QrelEntry],
                          min_assessments: int = 10) -> list[Query]:
    counts = Counter(q.qid for q in qrels)
    return [q for q in queries if counts.get(q.qid, 0) >= min_assessments]


# ---------------------------------------------------------------- clicks

@dataclass(frozen=True)
class ClickSession:
    qid: str
    displayed: tuple[str, ...]
    clicked: frozenset[int] = frozenset()

    def __post_init__(self):
        if not self.displayed:
            raise ValueError(f"session for {self.qid} displays nothing")
        object.__setattr__(self, "displayed", tuple(self.displayed))
        object.__setattr__(self, "clicked", frozenset(self.clicked))
        bad = [r for r in self.clicked if not 1 <= r <= len(self.displayed)]
        if bad:
            raise ValueError(f"click ranks {sorted(bad)} outside 1..{len(self.displayed)}")

    @property
    def deepest_click(self) -> int:
        return max(self.clicked, default=0)


@dataclass(frozen=True)
class AttractivenessEstimate:
    qid: str
    doc_id: str
    alpha: float
    support: int


def _eligible(session: ClickSession):
    """Yield ``(doc_id, clicked)`` for docs shown at or above the deepest click."""
    deepest = session.deepest_click
    seen = set()
    for rank, doc in enumerate(session.displayed[:deepest], 1):
        if doc in seen:
            continue
        seen.add(doc)
        yield doc, rank in session.clicked


def estimate_attractiveness(sessions: Iterable[ClickSession], qid: str,
                            doc_id: str) -> AttractivenessEstimate | None:
    """Maximum-likelihood attractiveness of ``doc_id`` for ``qid``.

    A session supports the estimate when the document was shown at or
    above its deepest click.  Returns None when no session does.
    """
    support = clicks = 0
    for s in sessions:
        if s.qid != qid:
            continue
        for doc, clicked in _eligible(s):
            if doc == doc_id:
                support += 1
                clicks += clicked
    if support == 0:
        return None
    return AttractivenessEstimate(qid, doc_id, clicks / support, support)


def estimate_all(sessions: Iterable[ClickSession]) -> list[AttractivenessEstimate]:
    """Estimates for every (qid, doc) with nonzero support, sorted by key."""
    support: Counter = Counter()
    clicks: Counter = Counter()
    for s in sessions:
        for doc, clicked in _eligible(s):
            support[(s.qid, doc)] += 1
            clicks[(s.qid, doc)] += clicked
    return [AttractivenessEstimate(q, d, clicks[(q, d)] / n, n)
            for (q, d), n in sorted(support.items())]


def grade_from_alpha(alpha: float, thresholds: tuple[float, float] = DEFAULT_THRESHOLDS) -> int:
    t1, t2 = thresholds
    if not 0 <= t1 < t2 <= 1:
        raise ValueError(f"thresholds must satisfy 0 <= t1 < t2 <= 1, got {thresholds}")
    if alpha < t1:
        return 0
    if alpha < t2:
        return 1
    return 2


def qrels_from_clicks(sessions: Iterable[ClickSession],
                      thresholds: tuple[float, float] = DEFAULT_THRESHOLDS) -> list[QrelEntry]:
    """Graded judgments for every pair with support; unsupported pairs stay unjudged."""
    return [QrelEntry(e.qid, e.doc_id, grade_from_alpha(e.alpha, thresholds))
            for e in estimate_all(sessions)]


def read_click_log(path: str | Path) -> list[ClickSession]:
    """Parse ``{"qid", "displayed": [...], "clicked": [rank, ...]}`` lines."""
    sessions = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
                sessions.append(ClickSession(str(rec["qid"]), tuple(rec["displayed"]),
                                             frozenset(int(r) for r in rec.get("clicked", []))))
            except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
                raise ValueError(f"{path}:{lineno}: bad click record: {exc}") from None
    return sessions


def write_click_log(sessions: Iterable[ClickSession], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for s in sessions:
            fh.write(json.dumps({"qid": s.qid, "displayed": list(s.displayed),
                                 "clicked": sorted(s.clicked)}) + "\n")


def simulate_cascade(qid: str, attractiveness: dict[str, float], n_sessions: int,
                     rng: np.random.Generator, serp_size: int | None = None,
                     terminal_doc: str | None = "__end__") -> list[ClickSession]:
    """Draw single-click cascade sessions with planted attractiveness.

    Each session shows a random ordering of the documents; the user scans
    top-down and clicks the first attractive one.  ``terminal_doc`` is
    appended last and always clicked when reached, so every session ends in
    a click; that is the regime in which the at-or-above-click estimator
    recovers the planted values.
    """
    docs = sorted(attractiveness)
    size = len(docs) if serp_size is None else min(serp_size, len(docs))
    sessions = []
    for _ in range(n_sessions):
        order = [docs[i] for i in rng.permutation(len(docs))[:size]]
        if terminal_doc is not None:
            order.append(terminal_doc)
        clicked = frozenset()
        for rank, doc in enumerate(order, 1):
            p = 1.0 if doc == terminal_doc else attractiveness[doc]
            if rng.random() < p:
                clicked = frozenset([rank])
                break
        sessions.append(ClickSession(qid, tuple(order), clicked))
    return sessions


def read_queries(path: str | Path) -> list[Query]:
    """``qid<TAB>text[<TAB>frequency]`` lines."""
    out = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.rstrip("\r\n")
            if not line.strip():
                continue
            cols = line.split("\t")
            if len(cols) < 2:
                raise ValueError(f"{path}:{lineno}: expected 'qid<TAB>query'")
            freq = int(cols[2]) if len(cols) > 2 and cols[2].strip() else 0
            out.append(Query(cols[0].strip(), cols[1], freq))
    _check_unique(out)
    return out


def write_queries(queries: Iterable[Query], path: str | Path, with_frequency: bool = False) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for q in queries:
            text = " ".join(q.text.split())
            fh.write(f"{q.qid}\t{text}\t{q.frequency}\n" if with_frequency else f"{q.qid}\t{text}\n")


def sessions_by_qid(sessions: Iterable[ClickSession]) -> dict[str, list[ClickSession]]:
    out: dict[str, list[ClickSession]] = defaultdict(list)
    for s in sessions:
        out[s.qid].append(s)
    return dict(out)
