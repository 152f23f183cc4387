"""Snapshot store and per-snapshot token statistics.

A store is a directory::

    <root>/snapshots/<YYYY-MM>/docs.jsonl   one {"docid", "text"} record per line
    <root>/snapshots/<YYYY-MM>/stats.json   CorpusStats sidecar written at ingest

Input files are either JSON lines with ``docid`` and ``text`` fields or
``docid<TAB>text`` lines; the format is detected per line.
"""

from __future__ import annotations

import csv
import json
import math
import os
import re
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Callable, Iterable, Iterator

_DATE_RE = re.compile(r"^\d{4}-(0[1-9]|1[0-2])$")

PER_MILLION = 10**6


class IngestError(ValueError):
    """Raised for malformed input records, duplicate ids and bad dates."""


def check_date(date: str) -> str:
    if not isinstance(date, str) or not _DATE_RE.match(date):
        raise IngestError(f"bad snapshot date {date!r}: expected YYYY-MM")
    return date


@dataclass(frozen=True)
class Document:
    doc_id: str
    text: str
    snapshot: str

    def __post_init__(self):
        if not self.doc_id:
            raise IngestError("empty doc_id")
        check_date(self.snapshot)


@dataclass(frozen=True)
class Snapshot:
    date: str
    doc_count: int
    path: Path

    @property
    def docs_path(self) -> Path:
        return self.path / "docs.jsonl"

    @property
    def stats_path(self) -> Path:
        return self.path / "stats.json"

    def __iter__(self) -> Iterator[Document]:
        with open(self.docs_path, encoding="utf-8") as fh:
            for line in fh:
                rec = json.loads(line)
                yield Document(rec["docid"], rec["text"], self.date)

    def __lt__(self, other: "Snapshot") -> bool:
        return self.date < other.date


@dataclass(frozen=True)
class CorpusStats:
    count: int
    sum_tokens: int
    sum_words: int
    avg_tokens: float
    std_tokens: float
    avg_words: float
    std_words: float
    sum_tokens_pm: float
    sum_words_pm: float

    FIELDS = ("count", "sum_tokens", "sum_words", "avg_tokens", "std_tokens",
              "avg_words", "std_words", "sum_tokens_pm", "sum_words_pm")

    def to_dict(self) -> dict:
        return asdict(self)


class Moments:
    """Exact integer (count, sum, sum of squares) accumulator.

    ``merge`` is associative and commutative, so shards can be reduced in
    any grouping and give identical results.
    """

    __slots__ = ("n", "s", "ss")

    def __init__(self, n: int = 0, s: int = 0, ss: int = 0):
        self.n, self.s, self.ss = n, s, ss

    def add(self, x: int) -> None:
        self.n += 1
        self.s += x
        self.ss += x * x

    def merge(self, other: "Moments") -> "Moments":
        return Moments(self.n + other.n, self.s + other.s, self.ss + other.ss)

    def mean(self) -> float:
        return self.s / self.n if self.n else 0.0

    def pstd(self) -> float:
        # population form; n*ss - s^2 is an exact integer
        if self.n == 0:
            return 0.0
        return math.sqrt(max(self.n * self.ss - self.s * self.s, 0)) / self.n


class VocabTokenizer:
    """Greedy longest-match subword tokenizer over a vocabulary file.

    One piece per line; a ``##`` prefix marks word-internal pieces.  A
    character not covered by any piece costs one token.
    """

    def __init__(self, pieces: Iterable[str]):
        self.initial: set[str] = set()
        self.inner: set[str] = set()
        for p in pieces:
            p = p.rstrip("\n")
            if not p:
                continue
            if p.startswith("##") and len(p) > 2:
                self.inner.add(p[2:])
            else:
                self.initial.add(p)
        self.max_len = max((len(p) for p in self.initial | self.inner), default=1)

    @classmethod
    def from_file(cls, path: str | Path) -> "VocabTokenizer":
        with open(path, encoding="utf-8") as fh:
            return cls(fh)

    def count(self, word: str) -> int:
        i, n, tokens = 0, len(word), 0
        while i < n:
            table = self.initial if i == 0 else self.inner | self.initial
            step = 1
            for L in range(min(self.max_len, n - i), 0, -1):
                if word[i:i + L] in table:
                    step = L
                    break
            i += step
            tokens += 1
        return tokens

    def __call__(self, text: str) -> int:
        return sum(self.count(w) for w in text.split())


def tokenize_counts(doc: Document | str, subword: Callable[[str], int] | None = None) -> tuple[int, int]:
    """Return ``(words, tokens)`` for a document.

    Words are maximal non-whitespace runs.  Tokens come from ``subword``
    when given (a callable returning a token count), else equal words.
    """
    text = doc.text if isinstance(doc, Document) else doc
    words = len(text.split())
    tokens = subword(text) if subword is not None else words
    return words, tokens


def estimate_llm_cost(sum_tokens: float, rate_per_million: float) -> float:
    if sum_tokens < 0 or rate_per_million < 0:
        raise ValueError("token count and rate must be nonnegative")
    return sum_tokens / PER_MILLION * rate_per_million


def stats_from_moments(words: Moments, tokens: Moments) -> CorpusStats:
    return CorpusStats(
        count=words.n,
        sum_tokens=tokens.s,
        sum_words=words.s,
        avg_tokens=tokens.mean(),
        std_tokens=tokens.pstd(),
        avg_words=words.mean(),
        std_words=words.pstd(),
        sum_tokens_pm=tokens.s / PER_MILLION,
        sum_words_pm=words.s / PER_MILLION,
    )


def compute_stats(docs: Iterable[Document | str], subword=None, shard_size: int = 50_000) -> CorpusStats:
    """Moments over documents, reduced shard by shard."""
    words, tokens = Moments(), Moments()
    shard_w, shard_t = Moments(), Moments()
    for i, doc in enumerate(docs, 1):
        w, t = tokenize_counts(doc, subword)
        shard_w.add(w)
        shard_t.add(t)
        if i % shard_size == 0:
            words, tokens = words.merge(shard_w), tokens.merge(shard_t)
            shard_w, shard_t = Moments(), Moments()
    return stats_from_moments(words.merge(shard_w), tokens.merge(shard_t))


def _parse_record(line: str, lineno: int, source: str) -> tuple[str, str]:
    if line.lstrip().startswith("{"):
        try:
            rec = json.loads(line)
        except json.JSONDecodeError as exc:
            raise IngestError(f"{source}:{lineno}: invalid JSON record: {exc.msg}") from None
        if not isinstance(rec, dict):
            raise IngestError(f"{source}:{lineno}: record is not an object")
        doc_id = rec.get("docid", rec.get("doc_id"))
        text = rec.get("text")
        if not isinstance(doc_id, str) or not isinstance(text, str):
            raise IngestError(f"{source}:{lineno}: record needs string fields 'docid' and 'text'")
    else:
        if "\t" not in line:
            raise IngestError(f"{source}:{lineno}: expected 'docid<TAB>text' or a JSON object")
        doc_id, text = line.split("\t", 1)
    doc_id = doc_id.strip()
    if not doc_id:
        raise IngestError(f"{source}:{lineno}: empty docid")
    return doc_id, text


class Store:
    """Directory-backed snapshot store."""

    def __init__(self, root: str | Path):
        self.root = Path(root)

    def snapshot_dir(self, date: str) -> Path:
        return self.root / "snapshots" / check_date(date)

    def index_dir(self, date: str) -> Path:
        return self.root / "indexes" / check_date(date)

    def dates(self) -> list[str]:
        base = self.root / "snapshots"
        if not base.is_dir():
            return []
        return sorted(p.name for p in base.iterdir() if (p / "docs.jsonl").is_file())

    def snapshot(self, date: str) -> Snapshot:
        d = self.snapshot_dir(date)
        stats_file = d / "stats.json"
        if not stats_file.is_file():
            raise FileNotFoundError(f"snapshot {date} has not been ingested into {self.root}")
        stats = json.loads(stats_file.read_text(encoding="utf-8"))
        return Snapshot(date, stats["count"], d)

    def snapshots(self) -> list[Snapshot]:
        return sorted(self.snapshot(d) for d in self.dates())

    def stats(self, date: str) -> CorpusStats:
        data = json.loads((self.snapshot_dir(date) / "stats.json").read_text(encoding="utf-8"))
        return CorpusStats(**data)


def ingest_snapshot(path: str | Path, date: str, store: Store | str | Path,
                    subword: Callable[[str], int] | None = None) -> Snapshot:
    """Copy a raw collection into the store under ``date``.

    Each record is validated as it streams through; the snapshot directory
    is only replaced once the whole file has been read without error.
    """
    check_date(date)
    if not isinstance(store, Store):
        store = Store(store)
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(path)
    out_dir = store.snapshot_dir(date)
    out_dir.mkdir(parents=True, exist_ok=True)
    tmp = out_dir / "docs.jsonl.tmp"

    seen: set[str] = set()
    words, tokens = Moments(), Moments()
    with open(path, encoding="utf-8") as src, open(tmp, "w", encoding="utf-8") as dst:
        for lineno, line in enumerate(src, 1):
            line = line.rstrip("\r\n")
            if not line.strip():
                continue
            doc_id, text = _parse_record(line, lineno, str(path))
            if doc_id in seen:
                tmp.unlink()
                raise IngestError(f"{path}:{lineno}: duplicate docid {doc_id!r}")
            seen.add(doc_id)
            w, t = tokenize_counts(text, subword)
            words.add(w)
            tokens.add(t)
            dst.write(json.dumps({"docid": doc_id, "text": text}, ensure_ascii=False) + "\n")
    os.replace(tmp, out_dir / "docs.jsonl")
    stats = stats_from_moments(words, tokens)
    (out_dir / "stats.json").write_text(json.dumps(stats.to_dict(), indent=2, sort_keys=True) + "\n",
                                        encoding="utf-8")
    return Snapshot(date, words.n, out_dir)


def snapshot_stats(snapshot: Snapshot, subword: Callable[[str], int] | None = None) -> CorpusStats:
    """Recompute statistics by streaming the stored documents."""
    return compute_stats((d.text for d in snapshot), subword)


def write_stats_csv(rows: list[tuple[str, CorpusStats]], out: str | Path) -> None:
    with open(out, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("date",) + CorpusStats.FIELDS)
        for date, st in rows:
            d = st.to_dict()
            w.writerow([date] + [_fmt(d[f]) for f in CorpusStats.FIELDS])


def _fmt(v) -> str:
    return str(v) if isinstance(v, int) else f"{v:.6f}"
