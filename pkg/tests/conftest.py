import json

import pytest

from tempir.analyzer import AnalyzerConfig
from tempir.corpus import Store, ingest_snapshot


@pytest.fixture
def plain():
    """Analyzer that only tokenizes and case folds."""
    return AnalyzerConfig(stopwords=frozenset(), stemmer="none")


@pytest.fixture
def make_store(tmp_path):
    """Ingest ``{date: [(doc_id, text), ...]}`` into a fresh store."""

    def make(snapshots):
        store = Store(tmp_path / "store")
        for date, docs in snapshots.items():
            raw = tmp_path / f"raw-{date}.jsonl"
            raw.write_text("".join(json.dumps({"docid": d, "text": t}) + "\n" for d, t in docs),
                           encoding="utf-8")
            ingest_snapshot(raw, date, store)
        return store

    return make


def pytest_terminal_summary(terminalreporter):
    import sys

    mod = sys.modules.get("test_acceptance")
    lines = getattr(mod, "RESULTS", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
