"""LLM query expansion: batched prompts, strict output validation, cached results.

A provider turns a prompt into a text payload that should hold a JSON
array of ``{"qid", "query"}`` objects.  Two kinds exist:

* ``http``: POSTs ``{"model", "prompt", "response_format"}`` to an
  endpoint with a bearer token from an environment variable.  The reply
  is JSON whose ``output`` (or ``text``) field is the payload; a reply
  carrying ``{"error": {"type": "content_filter"}}`` counts as a
  content-filter refusal.
* ``mock``: offline and deterministic.  It appends synonyms from a
  fixture table to each query, or returns a fixed expansion.

Expansions are appended to a JSON-lines cache keyed by qid, and cached
qids are never sent again.
"""

from __future__ import annotations

import json
import logging
import os
import re
import threading
import time
import urllib.error
import urllib.request
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from datetime import datetime, timezone
from functools import lru_cache
from importlib import resources
from pathlib import Path
from typing import Iterable, Sequence

import jsonschema

from .kvconfig import ConfigError, as_list, read_kv

log = logging.getLogger(__name__)

INSTRUCTIONS = (
    "For each query above, generate a query expansion in French that includes "
    "additional relevant terms or phrases.\n"
    "The query expansion should be no longer than 100 words.\n"
    "The query engine relies on BM25 and vector search techniques in French.\n"
    "The output should be a JSON array of objects, each containing the original "
    "'qid' and the expanded 'query'.\n"
)

OUTPUT_SCHEMA = {
    "type": "array",
    "items": {
        "type": "object",
        "properties": {
            "qid": {"type": "string", "description": "The query identifier."},
            "query": {"type": "string", "description": "The expanded query."},
        },
        "required": ["qid", "query"],
        "additionalProperties": False,
    },
}

DEFAULT_BATCH = 50
DEFAULT_CONCURRENCY = 4


class ExpansionError(ValueError):
    """Malformed or schema-violating provider output."""


class ProviderError(RuntimeError):
    """Transport or service failure; retried, then handed to the fallback."""


class ContentFilterError(ProviderError):
    """The provider refused the prompt on content grounds; not retried."""


@dataclass(frozen=True)
class ExpansionRecord:
    qid: str
    original: str
    expanded: str
    provider: str
    timestamp: str

    def __post_init__(self):
        if not self.expanded.strip():
            raise ExpansionError(f"empty expansion for {self.qid}")


@dataclass
class ProviderConfig:
    name: str = "mock"
    kind: str = "mock"
    endpoint: str = ""
    model: str = ""
    token_env: str = ""
    max_batch: int = DEFAULT_BATCH
    retries: int = 2
    timeout: float = 60.0
    min_interval: float = 0.0
    fallback: "ProviderConfig | None" = None
    # mock-only knobs
    fixed: str = ""
    blocked_terms: tuple[str, ...] = ()
    fail: bool = False

    def __post_init__(self):
        if self.kind not in ("http", "mock"):
            raise ConfigError(f"unknown provider kind {self.kind!r}")
        if self.retries < 0:
            raise ConfigError("retries must be >= 0")
        if self.max_batch < 1:
            raise ConfigError("max_batch must be >= 1")
        if self.kind == "http" and not self.endpoint:
            raise ConfigError(f"provider {self.name}: http kind needs an endpoint")

    def describe(self) -> dict:
        """Settings that influence outputs, for cache keys (no secrets)."""
        d = {"name": self.name, "kind": self.kind, "endpoint": self.endpoint, "model": self.model,
             "max_batch": self.max_batch, "fixed": self.fixed,
             "blocked_terms": list(self.blocked_terms), "fail": self.fail}
        d["fallback"] = self.fallback.describe() if self.fallback else None
        return d


def load_provider_config(path: str | Path) -> ProviderConfig:
    """Read a provider file; ``fallback`` names another provider file, relative to this one."""
    path = Path(path)
    kv = read_kv(path)
    fallback = None
    if kv.get("fallback"):
        fb = Path(kv["fallback"])
        fallback = load_provider_config(fb if fb.is_absolute() else path.parent / fb)
    try:
        return ProviderConfig(
            name=kv.get("name", path.stem),
            kind=kv.get("kind", "mock"),
            endpoint=kv.get("endpoint", ""),
            model=kv.get("model", ""),
            token_env=kv.get("token_env", ""),
            max_batch=int(kv.get("max_batch", DEFAULT_BATCH)),
            retries=int(kv.get("retries", 2)),
            timeout=float(kv.get("timeout", 60)),
            min_interval=float(kv.get("min_interval", 0)),
            fallback=fallback,
            fixed=kv.get("fixed", ""),
            blocked_terms=tuple(as_list(kv.get("blocked_terms", ""))),
            fail=kv.get("fail", "false").lower() == "true",
        )
    except ValueError as exc:
        raise ConfigError(f"{path}: {exc}") from None


# ---------------------------------------------------------------- prompt / parse

def build_prompt(batch: Sequence[tuple[str, str]], max_batch: int = DEFAULT_BATCH) -> str:
    if not batch:
        raise ValueError("cannot build a prompt for an empty batch")
    if len(batch) > max_batch:
        raise ValueError(f"batch of {len(batch)} exceeds max batch size {max_batch}")
    lines = "\n".join(f"{qid}\t{' '.join(text.split())}" for qid, text in batch)
    return f"{lines}\n\n{INSTRUCTIONS}"


def prompt_queries(prompt: str) -> list[tuple[str, str]]:
    """Recover the ``(qid, query)`` lines from a prompt built by build_prompt."""
    head = prompt.split("\n\n", 1)[0]
    return [tuple(line.split("\t", 1)) for line in head.splitlines() if "\t" in line]


_FENCE_RE = re.compile(r"^\s*```(?:json)?\s*\n(.*)\n\s*```\s*$", re.DOTALL)
_VALIDATOR = jsonschema.Draft7Validator(OUTPUT_SCHEMA)


def parse_expansion_response(payload: str, expected_qids: Iterable[str]) -> tuple[dict[str, str], set[str]]:
    """Validate a payload and return ``({qid: expanded}, missing_qids)``.

    Raises ExpansionError on invalid JSON, schema violations, empty
    expansions, unknown qids and duplicate qids.
    """
    expected = set(expected_qids)
    m = _FENCE_RE.match(payload)
    if m:
        payload = m.group(1)
    try:
        data = json.loads(payload)
    except json.JSONDecodeError as exc:
        raise ExpansionError(f"payload is not JSON: {exc.msg}") from None
    errors = sorted(_VALIDATOR.iter_errors(data), key=lambda e: list(e.path))
    if errors:
        e = errors[0]
        where = "/".join(str(p) for p in e.path) or "<root>"
        raise ExpansionError(f"schema violation at {where}: {e.message}")
    out: dict[str, str] = {}
    for item in data:
        qid, query = item["qid"], item["query"]
        if qid not in expected:
            raise ExpansionError(f"unknown qid {qid!r} in response")
        if qid in out:
            raise ExpansionError(f"duplicate qid {qid!r} in response")
        if not query.strip():
            raise ExpansionError(f"empty expansion for {qid!r}")
        out[qid] = query
    return out, expected - set(out)


def serialize_expansions(records: Iterable[ExpansionRecord]) -> str:
    return json.dumps([{"qid": r.qid, "query": r.expanded} for r in records], ensure_ascii=False)


# ---------------------------------------------------------------- providers

@lru_cache(maxsize=1)
def synonym_table() -> dict[str, list[str]]:
    text = (resources.files("tempir") / "data" / "synonyms_fr.tsv").read_text(encoding="utf-8")
    table = {}
    for line in text.splitlines():
        if "\t" in line:
            word, syns = line.split("\t", 1)
            table[word.casefold()] = syns.split()
    return table


def mock_expand(query: str) -> str:
    """Query followed by fixture synonyms of its words, without repeats."""
    words = query.split()
    extra = []
    for w in words:
        for s in synonym_table().get(w.casefold().strip(".,;:!?'\""), []):
            if s not in extra and s not in words:
                extra.append(s)
    return " ".join(words + extra)


class Provider:
    def __init__(self, config: ProviderConfig):
        self.config = config
        self.calls = 0
        self._lock = threading.Lock()
        self._last = 0.0

    def _throttle(self) -> None:
        if self.config.min_interval <= 0:
            return
        with self._lock:
            wait = self._last + self.config.min_interval - time.monotonic()
            if wait > 0:
                time.sleep(wait)
            self._last = time.monotonic()

    def complete(self, prompt: str) -> str:
        self._throttle()
        with self._lock:
            self.calls += 1
        if self.config.kind == "mock":
            return self._mock(prompt)
        return self._http(prompt)

    def _mock(self, prompt: str) -> str:
        c = self.config
        if c.fail:
            raise ProviderError(f"provider {c.name} configured to fail")
        pairs = prompt_queries(prompt)
        for _, q in pairs:
            if any(t.casefold() in q.casefold() for t in c.blocked_terms):
                raise ContentFilterError(f"provider {c.name} refused the batch")
        return json.dumps([{"qid": qid, "query": c.fixed or mock_expand(q)} for qid, q in pairs],
                          ensure_ascii=False)

    def _http(self, prompt: str) -> str:
        c = self.config
        body = json.dumps({"model": c.model, "prompt": prompt,
                           "response_format": {"type": "json_schema", "schema": OUTPUT_SCHEMA}}).encode()
        headers = {"Content-Type": "application/json"}
        if c.token_env:
            token = os.environ.get(c.token_env)
            if not token:
                raise ProviderError(f"environment variable {c.token_env} is not set")
            headers["Authorization"] = f"Bearer {token}"
        req = urllib.request.Request(c.endpoint, data=body, headers=headers, method="POST")
        try:
            with urllib.request.urlopen(req, timeout=c.timeout) as resp:
                raw = resp.read()
        except urllib.error.HTTPError as exc:
            raw = exc.read()
            if not _is_content_filter(raw):
                raise ProviderError(f"{c.name}: HTTP {exc.code}") from None
        except (urllib.error.URLError, OSError) as exc:
            raise ProviderError(f"{c.name}: {exc}") from None
        if _is_content_filter(raw):
            raise ContentFilterError(f"{c.name}: content filter")
        try:
            reply = json.loads(raw)
        except json.JSONDecodeError:
            raise ProviderError(f"{c.name}: reply is not JSON") from None
        out = reply.get("output", reply.get("text")) if isinstance(reply, dict) else reply
        if out is None:
            raise ProviderError(f"{c.name}: reply has no 'output' field")
        return out if isinstance(out, str) else json.dumps(out, ensure_ascii=False)


def _is_content_filter(raw: bytes) -> bool:
    try:
        reply = json.loads(raw)
    except (json.JSONDecodeError, UnicodeDecodeError):
        return False
    err = reply.get("error") if isinstance(reply, dict) else None
    return isinstance(err, dict) and err.get("type") == "content_filter"


# ---------------------------------------------------------------- cache

def read_cache(path: str | Path) -> dict[str, ExpansionRecord]:
    """Records by qid, last line winning; a torn final line is skipped."""
    path = Path(path)
    out: dict[str, ExpansionRecord] = {}
    if not path.exists():
        return out
    lines = path.read_text(encoding="utf-8").splitlines()
    for lineno, line in enumerate(lines, 1):
        if not line.strip():
            continue
        try:
            rec = ExpansionRecord(**json.loads(line))
        except (json.JSONDecodeError, TypeError, ExpansionError) as exc:
            if lineno == len(lines):
                log.warning("%s:%d: skipping incomplete cache line", path, lineno)
                continue
            raise ExpansionError(f"{path}:{lineno}: corrupt cache record: {exc}") from None
        out[rec.qid] = rec
    return out


def append_cache(path: str | Path, records: Iterable[ExpansionRecord]) -> None:
    with open(path, "a", encoding="utf-8") as fh:
        for r in records:
            fh.write(json.dumps(asdict(r), ensure_ascii=False, sort_keys=True) + "\n")
        fh.flush()
        os.fsync(fh.fileno())


# ---------------------------------------------------------------- driver

class ExpansionResult(list):
    """Records in input order; ``failed`` lists qids no provider could expand."""

    def __init__(self, records=(), failed=()):
        super().__init__(records)
        self.failed = list(failed)


def _now() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


def _ask(provider: Provider, batch: list[tuple[str, str]]) -> dict[str, str]:
    """One batch against one provider with retries; returns what it could expand."""
    prompt = build_prompt(batch, provider.config.max_batch)
    qids = [q for q, _ in batch]
    err = None
    for attempt in range(provider.config.retries + 1):
        try:
            got, missing = parse_expansion_response(provider.complete(prompt), qids)
            if missing:
                log.warning("%s omitted %d qid(s)", provider.config.name, len(missing))
            return got
        except ContentFilterError:
            raise
        except (ProviderError, ExpansionError) as exc:
            err = exc
            if attempt < provider.config.retries:
                time.sleep(min(0.05 * 2 ** attempt, 2.0))
    raise ProviderError(f"{provider.config.name}: gave up after {provider.config.retries + 1} attempts: {err}")


def _expand_one_batch(chain: list[Provider], batch: list[tuple[str, str]]) -> tuple[list[ExpansionRecord], list[str]]:
    texts = dict(batch)
    pending = list(batch)
    records = []
    for provider in chain:
        if not pending:
            break
        try:
            got = _ask(provider, pending)
        except ProviderError as exc:
            log.warning("batch of %d failed on %s: %s", len(pending), provider.config.name, exc)
            continue
        stamp = _now()
        for qid, exp in got.items():
            records.append(ExpansionRecord(qid, texts[qid], exp, provider.config.name, stamp))
        pending = [(q, t) for q, t in pending if q not in got]
    return records, [q for q, _ in pending]


@dataclass
class Expander:
    """Provider chain (primary then fallbacks) sharing call counters across runs."""

    config: ProviderConfig
    providers: list[Provider] = field(init=False)

    def __post_init__(self):
        self.providers, c = [], self.config
        while c is not None:
            self.providers.append(Provider(c))
            c = c.fallback

    @property
    def calls(self) -> int:
        return sum(p.calls for p in self.providers)


def expand_batch(provider: ProviderConfig | Expander, queries: Sequence, cache: str | Path,
                 concurrency: int = DEFAULT_CONCURRENCY) -> ExpansionResult:
    """Expand queries (objects with ``qid`` and ``text``), consulting and extending the cache.

    Uncached queries go out in batches of ``max_batch`` with at most
    ``concurrency`` requests in flight.  Only the calling thread writes
    the cache, once per completed batch.
    """
    expander = provider if isinstance(provider, Expander) else Expander(provider)
    cached = read_cache(cache)
    todo = [(q.qid, q.text) for q in queries if q.qid not in cached]
    size = expander.config.max_batch
    batches = [todo[i:i + size] for i in range(0, len(todo), size)]
    new: dict[str, ExpansionRecord] = {}
    failed: list[str] = []
    if batches:
        Path(cache).parent.mkdir(parents=True, exist_ok=True)
        with ThreadPoolExecutor(max(1, concurrency)) as pool:
            for records, lost in pool.map(lambda b: _expand_one_batch(expander.providers, b), batches):
                append_cache(cache, records)
                new.update((r.qid, r) for r in records)
                failed.extend(lost)
    if failed:
        log.warning("%d query(s) could not be expanded: %s", len(failed), ", ".join(failed[:10]))
    records = []
    for q in queries:
        r = new.get(q.qid) or cached.get(q.qid)
        if r is not None:
            records.append(r)
    return ExpansionResult(records, failed)
