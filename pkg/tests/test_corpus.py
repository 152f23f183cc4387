import json

import pytest
from hypothesis import given, strategies as st

from tempir.corpus import (CorpusStats, Document, IngestError, Moments, VocabTokenizer, compute_stats,
                           estimate_llm_cost, ingest_snapshot, snapshot_stats, tokenize_counts, write_stats_csv)


def whitespace_runs(text):
    """Independent word counter: count transitions into non-whitespace."""
    n, inside = 0, False
    for ch in text:
        if ch.isspace():
            inside = False
        elif not inside:
            inside, n = True, n + 1
    return n


class TestTokenizeCounts:
    def test_simple(self):
        assert tokenize_counts("le chat dort") == (3, 3)

    def test_empty(self):
        assert tokenize_counts("") == (0, 0)

    def test_mixed_whitespace(self):
        assert tokenize_counts("a  b\tc\n")[0] == 3

    @given(st.text())
    def test_matches_brute_force(self, text):
        assert tokenize_counts(text)[0] == whitespace_runs(text)

    def test_subword_binding(self):
        tok = VocabTokenizer(["cha", "##t", "d", "##ort"])
        assert tok.count("chat") == 2
        assert tokenize_counts("chat dort", tok) == (2, 4)


class TestIngest:
    def test_two_records(self, tmp_path):
        raw = tmp_path / "in.jsonl"
        raw.write_text('{"docid": "a", "text": "x y"}\n{"docid": "b", "text": "z"}\n', encoding="utf-8")
        snap = ingest_snapshot(raw, "2022-06", tmp_path / "store")
        assert snap.doc_count == 2
        assert [d.doc_id for d in snap] == ["a", "b"]

    def test_tsv_records(self, tmp_path):
        raw = tmp_path / "in.tsv"
        raw.write_text("a\tun deux\nb\ttrois\n", encoding="utf-8")
        snap = ingest_snapshot(raw, "2022-06", tmp_path / "store")
        assert snap.doc_count == 2

    def test_empty_file(self, tmp_path):
        raw = tmp_path / "empty.jsonl"
        raw.write_text("", encoding="utf-8")
        snap = ingest_snapshot(raw, "2022-06", tmp_path / "store")
        assert snap.doc_count == 0
        st_ = snapshot_stats(snap)
        assert st_.count == 0 and st_.avg_words == 0.0

    def test_duplicate_docid(self, tmp_path):
        raw = tmp_path / "dup.jsonl"
        raw.write_text('{"docid": "d1", "text": "a"}\n{"docid": "d1", "text": "b"}\n', encoding="utf-8")
        with pytest.raises(IngestError, match="d1"):
            ingest_snapshot(raw, "2022-06", tmp_path / "store")

    def test_malformed_line_number(self, tmp_path):
        raw = tmp_path / "bad.jsonl"
        raw.write_text('{"docid": "a", "text": "x"}\n{"docid": \n', encoding="utf-8")
        with pytest.raises(IngestError, match=":2:"):
            ingest_snapshot(raw, "2022-06", tmp_path / "store")

    @pytest.mark.parametrize("date", ["2022-13", "22-06", "2022/06", ""])
    def test_bad_date(self, tmp_path, date):
        raw = tmp_path / "in.jsonl"
        raw.write_text('{"docid": "a", "text": "x"}\n', encoding="utf-8")
        with pytest.raises(IngestError):
            ingest_snapshot(raw, date, tmp_path / "store")

    def test_idempotent_stats(self, tmp_path):
        raw = tmp_path / "in.jsonl"
        raw.write_text("".join(json.dumps({"docid": f"d{i}", "text": "mot " * i}) + "\n" for i in range(20)),
                       encoding="utf-8")
        a = ingest_snapshot(raw, "2022-06", tmp_path / "s1")
        b = ingest_snapshot(raw, "2022-06", tmp_path / "s2")
        assert a.stats_path.read_bytes() == b.stats_path.read_bytes()

    def test_store_orders_snapshots(self, make_store):
        store = make_store({"2023-01": [("a", "x")], "2022-06": [("b", "y")]})
        assert [s.date for s in store.snapshots()] == ["2022-06", "2023-01"]

    def test_document_invariants(self):
        with pytest.raises(IngestError):
            Document("", "x", "2022-06")


class TestStats:
    def test_two_docs(self):
        st_ = compute_stats(["a b", "a b c d"])
        assert (st_.avg_words, st_.std_words) == (3.0, 1.0)

    def test_single(self):
        st_ = compute_stats(["a b c d e"])
        assert (st_.avg_words, st_.std_words) == (5.0, 0.0)

    @given(st.lists(st.text(alphabet="ab \t\n", max_size=30), max_size=40), st.integers(1, 7))
    def test_sum_and_pm(self, texts, shard):
        st_ = compute_stats(texts, shard_size=shard)
        assert st_.sum_words == sum(whitespace_runs(t) for t in texts)
        assert st_.sum_words_pm == st_.sum_words / 10**6
        assert st_.sum_tokens_pm == st_.sum_tokens / 10**6
        if texts:
            assert st_.avg_words == pytest.approx(st_.sum_words / len(texts))

    @given(st.lists(st.integers(0, 10**6), max_size=30), st.lists(st.integers(0, 10**6), max_size=30))
    def test_moments_merge_associative(self, xs, ys):
        a, b, whole = Moments(), Moments(), Moments()
        for x in xs:
            a.add(x)
            whole.add(x)
        for y in ys:
            b.add(y)
            whole.add(y)
        m = a.merge(b)
        assert (m.n, m.s, m.ss) == (whole.n, whole.s, whole.ss)
        assert b.merge(a).pstd() == m.pstd()

    def test_csv(self, tmp_path):
        st_ = compute_stats(["a b", "c"])
        write_stats_csv([("2022-06", st_)], tmp_path / "s.csv")
        head, row = (tmp_path / "s.csv").read_text().splitlines()
        assert head.split(",") == ["date"] + list(CorpusStats.FIELDS)
        assert row.startswith("2022-06,2,3,3,")


class TestCost:
    def test_reference_scale(self):
        # 25276.2 million tokens, displayed rounded as 2.53e10
        assert estimate_llm_cost(25276.2e6, 0.10) == pytest.approx(2527.62)
        assert estimate_llm_cost(2.53e10, 0.10) == pytest.approx(2530.0)

    def test_zero(self):
        assert estimate_llm_cost(0, 5.0) == 0.0

    def test_unit(self):
        assert estimate_llm_cost(10**6, 0.40) == pytest.approx(0.40)

    def test_negative(self):
        with pytest.raises(ValueError):
            estimate_llm_cost(-1, 0.1)
