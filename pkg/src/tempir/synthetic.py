"""Deterministic synthetic benchmark with planted relevance.

Every query has a handful of graded relevant documents plus judged
non-relevant distractors that repeat one query term many times in short
texts.  BM25 therefore ranks some distractors above relevant documents,
while an oracle reranker can restore the ideal order: all relevant
documents share at least one query term with their query, so they are
always in the candidate set.  Later snapshots drop query terms from
relevant documents more often, giving a measurable temporal drop.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .analyzer import AnalyzerConfig, analyze
from .collection import Query, write_queries
from .evaluation import QrelEntry, write_qrels

_ONSETS = ("b", "c", "d", "f", "g", "l", "m", "n", "p", "r", "s", "t", "v", "ch", "gr", "pr", "tr")
_VOWELS = ("a", "e", "i", "o", "u", "ou", "an", "on")

DEFAULT_SNAPSHOTS = ("2022-06", "2022-07", "2022-08")


@dataclass(frozen=True)
class SynthSpec:
    snapshots: tuple[str, ...] = DEFAULT_SNAPSHOTS
    n_docs: int = 1000
    n_queries: int = 50
    n_relevant: int = 5
    n_distractors: int = 8
    background_vocab: int = 2000
    seed: int = 13


def _pseudo_words(rng: np.random.Generator, n: int, taken: set[str], analyzer: AnalyzerConfig) -> list[str]:
    """Distinct pronounceable words whose analyzed forms are distinct single terms."""
    words, stems = [], set(taken)
    while len(words) < n:
        syl = int(rng.integers(2, 5))
        w = "".join(_ONSETS[rng.integers(len(_ONSETS))] + _VOWELS[rng.integers(len(_VOWELS))]
                    for _ in range(syl))
        terms = analyze(w, analyzer)
        if len(terms) != 1 or terms[0] in stems:
            continue
        stems.add(terms[0])
        words.append(w)
    return words


def generate(out_dir: str | Path, spec: SynthSpec = SynthSpec(), analyzer: AnalyzerConfig | None = None) -> dict:
    """Write raw snapshots, queries and per-snapshot qrels under ``out_dir``.

    Layout: ``raw/<date>.jsonl``, ``queries.tsv``, ``qrels/<date>.txt``.
    Returns a summary dict.
    """
    analyzer = analyzer or AnalyzerConfig()
    out = Path(out_dir)
    (out / "raw").mkdir(parents=True, exist_ok=True)
    (out / "qrels").mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(spec.seed)

    background = _pseudo_words(rng, spec.background_vocab, set(), analyzer)
    taken = {analyze(w, analyzer)[0] for w in background}
    qterms_pool = _pseudo_words(rng, spec.n_queries * 3, taken, analyzer)
    zipf = 1.0 / np.arange(1, len(background) + 1) ** 1.05
    zipf /= zipf.sum()

    queries = []
    for i in range(spec.n_queries):
        n_terms = 2 + int(rng.integers(0, 2))
        terms = qterms_pool[3 * i:3 * i + n_terms]
        queries.append(Query(f"q{i + 1:03d}", " ".join(terms), int(rng.integers(1, 1000))))
    write_queries(queries, out / "queries.tsv", with_frequency=True)

    def filler(n: int) -> list[str]:
        return [background[j] for j in rng.choice(len(background), size=n, p=zipf)]

    per_query = spec.n_relevant + spec.n_distractors
    if per_query * spec.n_queries > spec.n_docs:
        raise ValueError("not enough documents for the planted judgments")
    summary = {"snapshots": list(spec.snapshots), "queries": len(queries), "docs_per_snapshot": spec.n_docs}
    for s_idx, date in enumerate(spec.snapshots):
        keep_p = 0.9 - 0.2 * s_idx  # chance that a relevant doc keeps each query term
        slots = rng.permutation(spec.n_docs)
        texts: list[list[str] | None] = [None] * spec.n_docs
        qrels = []
        for qi, q in enumerate(queries):
            terms = q.text.split()
            mine = slots[qi * per_query:(qi + 1) * per_query]
            for j, slot in enumerate(mine):
                doc_id = f"d{date.replace('-', '')}-{slot:05d}"
                if j < spec.n_relevant:
                    kept = [t for t in terms if rng.random() < keep_p] or [terms[int(rng.integers(len(terms)))]]
                    body = filler(int(rng.integers(60, 120))) + kept
                    grade = 2 if j < 2 else 1
                else:
                    t = terms[int(rng.integers(len(terms)))]
                    body = filler(int(rng.integers(15, 30))) + [t] * int(rng.integers(3, 6))
                    grade = 0
                rng.shuffle(body)
                texts[slot] = body
                qrels.append(QrelEntry(q.qid, doc_id, grade))
        for slot in range(spec.n_docs):
            if texts[slot] is None:
                texts[slot] = filler(int(rng.integers(30, 120)))
        with open(out / "raw" / f"{date}.jsonl", "w", encoding="utf-8") as fh:
            for slot, body in enumerate(texts):
                doc_id = f"d{date.replace('-', '')}-{slot:05d}"
                fh.write(json.dumps({"docid": doc_id, "text": " ".join(body)}, ensure_ascii=False) + "\n")
        qrels.sort(key=lambda e: (e.qid, e.doc_id))
        write_qrels(qrels, out / "qrels" / f"{date}.txt")
    return summary


def write_bundle_configs(out_dir: str | Path, workers: int = 1) -> Path:
    """Experiment, mock provider and oracle scorer configs for a generated benchmark."""
    out = Path(out_dir)
    (out / "provider.conf").write_text("name = mock\nkind = mock\n", encoding="utf-8")
    (out / "scorer.conf").write_text("kind = oracle-qrel\nqrels = qrels/{snapshot}.txt\n", encoding="utf-8")
    conf = out / "experiment.conf"
    conf.write_text(
        "store = store\n"
        "experiments = bm25, bm25-expanded, bm25-reranked, bm25-expanded-reranked\n"
        "queries = queries.tsv\n"
        "qrels = qrels/{snapshot}.txt\n"
        "provider = provider.conf\n"
        "scorer = scorer.conf\n"
        "expansion_cache = expansions.jsonl\n"
        "out = out\n"
        "k = 100\n"
        "cutoff = 10\n"
        f"workers = {workers}\n",
        encoding="utf-8")
    return conf
