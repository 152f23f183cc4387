"""BM25 inverted index and top-k keyword retrieval.

On disk an index is a directory::

    meta.json      N, avgdl, analyzer settings
    docs.tsv       ordinal -> doc_id, doc length
    lexicon.tsv    term, df, byte offset, byte length into postings.bin
    postings.bin   per term: varint (doc-ordinal gap, tf) pairs

Postings are decoded lazily from a memory map, so a loaded index is
read-only and safe to share between threads.
"""

from __future__ import annotations

import heapq
import json
import math
import mmap
import warnings
from collections import Counter
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .analyzer import AnalyzerConfig, analyze
from .evaluation import RunEntry

FORMAT_VERSION = 1


class EmptyQueryWarning(UserWarning):
    """The query analyzed to zero terms; nothing can be retrieved."""


@dataclass(frozen=True)
class Bm25Params:
    k1: float = 0.9
    b: float = 0.4

    def __post_init__(self):
        if not self.k1 > 0:
            raise ValueError(f"k1 must be > 0, got {self.k1}")
        if not 0 <= self.b <= 1:
            raise ValueError(f"b must be in [0, 1], got {self.b}")


# ---------------------------------------------------------------- varints

def encode_varints(values: Iterable[int]) -> bytes:
    out = bytearray()
    for v in values:
        if v < 0:
            raise ValueError("varints are unsigned")
        while v >= 0x80:
            out.append((v & 0x7F) | 0x80)
            v >>= 7
        out.append(v)
    return bytes(out)


def decode_varints(buf) -> list[int]:
    values, cur, shift = [], 0, 0
    for byte in buf:
        cur |= (byte & 0x7F) << shift
        if byte & 0x80:
            shift += 7
        else:
            values.append(cur)
            cur, shift = 0, 0
    if shift:
        raise ValueError("truncated varint stream")
    return values


def encode_postings(ordinals: Sequence[int], tfs: Sequence[int]) -> bytes:
    flat, prev = [], 0
    for o, tf in zip(ordinals, tfs):
        flat.append(o - prev)
        flat.append(tf)
        prev = o
    return encode_varints(flat)


def decode_postings(buf) -> tuple[np.ndarray, np.ndarray]:
    flat = np.asarray(decode_varints(buf), dtype=np.int64)
    return np.cumsum(flat[0::2]), flat[1::2]


# ---------------------------------------------------------------- index

class InvertedIndex:
    """Term -> (doc ordinals, term frequencies) with BM25 collection statistics."""

    def __init__(self, doc_ids: list[str], doc_lengths: np.ndarray,
                 postings: dict[str, tuple[np.ndarray, np.ndarray]] | None = None,
                 analyzer: AnalyzerConfig | None = None):
        self.doc_ids = list(doc_ids)
        self.doc_lengths = np.asarray(doc_lengths, dtype=np.int64)
        self.analyzer = analyzer or AnalyzerConfig()
        self._postings = postings if postings is not None else {}
        self._lexicon: dict[str, tuple[int, int, int]] = {}
        self._blob = None
        self._ordinal = {d: i for i, d in enumerate(self.doc_ids)}

    @property
    def N(self) -> int:
        return len(self.doc_ids)

    @property
    def avgdl(self) -> float:
        return float(self.doc_lengths.mean()) if self.N else 0.0

    def terms(self) -> list[str]:
        return sorted(set(self._postings) | set(self._lexicon))

    def df(self, term: str) -> int:
        if term in self._postings:
            return len(self._postings[term][0])
        return self._lexicon[term][0] if term in self._lexicon else 0

    def postings(self, term: str) -> tuple[np.ndarray, np.ndarray]:
        if term not in self._postings:
            if term not in self._lexicon:
                empty = np.zeros(0, dtype=np.int64)
                return empty, empty
            _, off, n = self._lexicon[term]
            self._postings[term] = decode_postings(self._blob[off:off + n])
        return self._postings[term]

    def ordinal(self, doc_id: str) -> int:
        return self._ordinal[doc_id]

    def idf(self, term: str) -> float:
        df = self.df(term)
        return math.log(1.0 + (self.N - df + 0.5) / (df + 0.5))

    def tf(self, term: str, ordinal: int) -> int:
        ords, tfs = self.postings(term)
        i = int(np.searchsorted(ords, ordinal))
        return int(tfs[i]) if i < len(ords) and ords[i] == ordinal else 0

    # -------------------------------------------------------- persistence

    def save(self, out_dir: str | Path) -> Path:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        meta = {"format": FORMAT_VERSION, "N": self.N, "avgdl": self.avgdl,
                "analyzer": self.analyzer.to_dict()}
        with open(out / "docs.tsv", "w", encoding="utf-8") as fh:
            for d, n in zip(self.doc_ids, self.doc_lengths):
                fh.write(f"{d}\t{int(n)}\n")
        offset = 0
        with open(out / "postings.bin", "wb") as pb, open(out / "lexicon.tsv", "w", encoding="utf-8") as lx:
            for term in self.terms():
                ords, tfs = self.postings(term)
                blob = encode_postings(ords.tolist(), tfs.tolist())
                pb.write(blob)
                lx.write(f"{term}\t{len(ords)}\t{offset}\t{len(blob)}\n")
                offset += len(blob)
        (out / "meta.json").write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n", encoding="utf-8")
        return out

    @classmethod
    def load(cls, in_dir: str | Path, analyzer: AnalyzerConfig | None = None) -> "InvertedIndex":
        """Open a persisted index; ``analyzer`` must match the one used at build time."""
        d = Path(in_dir)
        meta = json.loads((d / "meta.json").read_text(encoding="utf-8"))
        if meta.get("format") != FORMAT_VERSION:
            raise ValueError(f"{d}: unsupported index format {meta.get('format')!r}")
        analyzer = analyzer or AnalyzerConfig()
        if analyzer.to_dict() != meta["analyzer"]:
            raise ValueError(f"{d}: analyzer settings differ from those used to build the index")
        doc_ids, lengths = [], []
        with open(d / "docs.tsv", encoding="utf-8") as fh:
            for line in fh:
                doc_id, n = line.rstrip("\n").split("\t")
                doc_ids.append(doc_id)
                lengths.append(int(n))
        idx = cls(doc_ids, np.asarray(lengths, dtype=np.int64), {}, analyzer)
        with open(d / "lexicon.tsv", encoding="utf-8") as fh:
            for line in fh:
                term, df, off, n = line.rstrip("\n").split("\t")
                idx._lexicon[term] = (int(df), int(off), int(n))
        size = (d / "postings.bin").stat().st_size
        if size:
            with open(d / "postings.bin", "rb") as fh:
                idx._blob = mmap.mmap(fh.fileno(), 0, access=mmap.ACCESS_READ)
        return idx


# ---------------------------------------------------------------- build

def _build_shard(args) -> tuple[list[str], list[int], dict[str, tuple[list[int], list[int]]]]:
    base, docs, analyzer = args
    doc_ids, lengths = [], []
    postings: dict[str, tuple[list[int], list[int]]] = {}
    for i, (doc_id, text) in enumerate(docs):
        terms = analyze(text, analyzer)
        doc_ids.append(doc_id)
        lengths.append(len(terms))
        for term, tf in Counter(terms).items():
            ords, tfs = postings.setdefault(term, ([], []))
            ords.append(base + i)
            tfs.append(tf)
    return doc_ids, lengths, postings


def build_index_from_docs(docs: Iterable[tuple[str, str]], analyzer: AnalyzerConfig | None = None,
                          shard_size: int = 10_000, workers: int = 1) -> InvertedIndex:
    """Index ``(doc_id, text)`` pairs; ordinals follow input order.

    Documents are split into consecutive shards that may be analyzed in
    parallel; shards are merged in order, so posting lists stay sorted and
    the result does not depend on ``workers``.
    """
    analyzer = analyzer or AnalyzerConfig()
    shards, cur, base = [], [], 0
    for doc in docs:
        cur.append(doc)
        if len(cur) == shard_size:
            shards.append((base, cur, analyzer))
            base += len(cur)
            cur = []
    if cur:
        shards.append((base, cur, analyzer))

    if workers > 1 and len(shards) > 1:
        with ProcessPoolExecutor(workers) as pool:
            parts = list(pool.map(_build_shard, shards))
    else:
        parts = [_build_shard(s) for s in shards]

    doc_ids, lengths = [], []
    merged: dict[str, tuple[list[int], list[int]]] = {}
    for ids, lens, post in parts:
        doc_ids.extend(ids)
        lengths.extend(lens)
        for term, (ords, tfs) in post.items():
            m = merged.setdefault(term, ([], []))
            m[0].extend(ords)
            m[1].extend(tfs)
    if len(set(doc_ids)) != len(doc_ids):
        raise ValueError("duplicate doc_id in indexed documents")
    postings = {t: (np.asarray(o, dtype=np.int64), np.asarray(f, dtype=np.int64))
                for t, (o, f) in merged.items()}
    return InvertedIndex(doc_ids, np.asarray(lengths, dtype=np.int64), postings, analyzer)


def build_index(snapshot, analyzer: AnalyzerConfig | None = None, out_dir: str | Path | None = None,
                shard_size: int = 10_000, workers: int = 1) -> InvertedIndex:
    """Index a stored snapshot and persist it when ``out_dir`` is given."""
    idx = build_index_from_docs(((d.doc_id, d.text) for d in snapshot), analyzer, shard_size, workers)
    if out_dir is not None:
        idx.save(out_dir)
    return idx


# ---------------------------------------------------------------- scoring

def _term_weight(idf: float, tf: int, dl: int, avgdl: float, params: Bm25Params) -> float:
    norm = params.k1 * (1.0 - params.b + params.b * dl / avgdl)
    return idf * tf * (params.k1 + 1.0) / (tf + norm)


def bm25_score(index: InvertedIndex, query_terms: Sequence[str], ordinal: int,
               params: Bm25Params = Bm25Params()) -> float:
    """BM25 of one document; repeated query terms count once per occurrence."""
    if not 0 <= ordinal < index.N:
        raise IndexError(f"doc ordinal {ordinal} out of range")
    dl, avgdl = int(index.doc_lengths[ordinal]), index.avgdl
    score = 0.0
    for t in query_terms:
        tf = index.tf(t, ordinal)
        if tf:
            score += _term_weight(index.idf(t), tf, dl, avgdl, params)
    return score


def search_terms(index: InvertedIndex, terms: Sequence[str], k: int = 100,
                 params: Bm25Params = Bm25Params()) -> list[tuple[str, float]]:
    """Top-k ``(doc_id, score)`` for analyzed query terms.

    Document-at-a-time: every document matching at least one term is fully
    scored in ordinal order and offered to a bounded heap.  Per-document
    contributions are summed in query-term order.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    if not terms or index.N == 0:
        return []
    avgdl = index.avgdl
    lists = {}
    for t in dict.fromkeys(terms):
        ords, tfs = index.postings(t)
        if len(ords):
            lists[t] = (dict(zip(ords.tolist(), tfs.tolist())), index.idf(t))
    if not lists:
        return []
    candidates = sorted(set().union(*(p for p, _ in lists.values())))

    def scored():
        for o in candidates:
            dl = int(index.doc_lengths[o])
            s = 0.0
            for t in terms:
                entry = lists.get(t)
                if entry is not None:
                    tf = entry[0].get(o)
                    if tf:
                        s += _term_weight(entry[1], tf, dl, avgdl, params)
            yield index.doc_ids[o], s

    return heapq.nsmallest(k, scored(), key=lambda x: (-x[1], x[0]))


def search(index: InvertedIndex, query, analyzer: AnalyzerConfig | None = None, k: int = 100,
           params: Bm25Params = Bm25Params(), tag: str = "bm25") -> list[RunEntry]:
    """Retrieve the top-k documents for a Query (or raw text) as ranked run entries."""
    analyzer = analyzer or index.analyzer
    qid = getattr(query, "qid", "")
    text = getattr(query, "text", query)
    terms = analyze(text, analyzer)
    if not terms:
        warnings.warn(f"query {qid!r} has no terms after analysis", EmptyQueryWarning, stacklevel=2)
        return []
    hits = search_terms(index, terms, k, params)
    return [RunEntry(qid, d, r, s, tag) for r, (d, s) in enumerate(hits, 1)]


def search_all(index: InvertedIndex, queries: Iterable, k: int = 100, params: Bm25Params = Bm25Params(),
               tag: str = "bm25", analyzer: AnalyzerConfig | None = None) -> list[RunEntry]:
    run = []
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", EmptyQueryWarning)
        for q in queries:
            run.extend(search(index, q, analyzer, k, params, tag))
    return run
