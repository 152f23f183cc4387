import math
import random
import warnings

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from oracles import bm25_brute_force
from tempir.analyzer import AnalyzerConfig, analyze
from tempir.collection import Query
from tempir.index import (Bm25Params, EmptyQueryWarning, InvertedIndex, bm25_score, build_index,
                          build_index_from_docs, decode_postings, decode_varints, encode_postings,
                          encode_varints, search, search_terms)

PLAIN = AnalyzerConfig(stopwords=frozenset(), stemmer="none")
WORDS = ["chat", "chien", "eau", "pain", "vin", "mer", "ciel", "bois", "feu", "sel"]


def random_corpus(rng, n_docs=50):
    return [(f"d{i:03d}", " ".join(rng.choices(WORDS, k=rng.randint(1, 12)))) for i in range(n_docs)]


def oracle_topk(docs, query_terms, k):
    terms = [analyze(t, PLAIN) for _, t in docs]
    scores = bm25_brute_force(terms, query_terms)
    hits = [(d, s) for (d, _), s, ts in zip(docs, scores, terms) if any(q in ts for q in query_terms)]
    hits.sort(key=lambda x: (-x[1], x[0]))
    return hits[:k]


class TestBuild:
    def test_df(self):
        idx = build_index_from_docs([("a", "chat noir"), ("b", "chat"), ("c", "chien")], PLAIN)
        assert idx.df("chat") == 2 and idx.df("absent") == 0

    def test_avgdl(self):
        idx = build_index_from_docs([("a", "x y z"), ("b", "x y z w v")], PLAIN)
        assert idx.avgdl == 4.0

    def test_empty_snapshot(self, make_store):
        store = make_store({"2022-06": []})
        idx = build_index(store.snapshot("2022-06"), PLAIN, store.index_dir("2022-06"))
        assert idx.N == 0
        assert search(idx, "chat", PLAIN) == []
        loaded = InvertedIndex.load(store.index_dir("2022-06"), PLAIN)
        assert loaded.N == 0

    def test_invariants(self):
        idx = build_index_from_docs(random_corpus(random.Random(0)), PLAIN, shard_size=7)
        for t in idx.terms():
            ords, tfs = idx.postings(t)
            assert np.all(np.diff(ords) > 0)
            assert idx.df(t) == len(ords)
            assert np.all(tfs >= 1)
        assert idx.avgdl == pytest.approx(idx.doc_lengths.mean())

    def test_sharding_is_deterministic(self):
        docs = random_corpus(random.Random(4))
        a = build_index_from_docs(docs, PLAIN, shard_size=5)
        b = build_index_from_docs(docs, PLAIN, shard_size=1000)
        c = build_index_from_docs(docs, PLAIN, shard_size=9, workers=2)
        for other in (b, c):
            assert a.terms() == other.terms()
            for t in a.terms():
                assert np.array_equal(a.postings(t)[0], other.postings(t)[0])
                assert np.array_equal(a.postings(t)[1], other.postings(t)[1])

    def test_duplicate_ids(self):
        with pytest.raises(ValueError):
            build_index_from_docs([("a", "x"), ("a", "y")], PLAIN)


class TestVarint:
    @given(st.lists(st.integers(0, 2**40)))
    def test_round_trip(self, values):
        assert decode_varints(encode_varints(values)) == values

    @given(st.lists(st.tuples(st.integers(0, 10**6), st.integers(1, 500)), unique_by=lambda x: x[0]))
    def test_postings_round_trip(self, pairs):
        pairs.sort()
        ords, tfs = decode_postings(encode_postings([p[0] for p in pairs], [p[1] for p in pairs]))
        assert ords.tolist() == [p[0] for p in pairs] and tfs.tolist() == [p[1] for p in pairs]

    def test_truncated(self):
        with pytest.raises(ValueError):
            decode_varints(b"\x80")


class TestScoring:
    def test_worked_example(self):
        idx = build_index_from_docs([("a", "chat x"), ("b", "chien y"), ("c", "oiseau z")], PLAIN)
        assert bm25_score(idx, ["chat"], 0) == pytest.approx(math.log(2.5 / 1.5 + 1), abs=1e-6)
        assert bm25_score(idx, ["chat"], 0) == pytest.approx(0.9808, abs=1e-4)

    def test_absent_term(self):
        idx = build_index_from_docs([("a", "chat"), ("b", "chien")], PLAIN)
        assert bm25_score(idx, ["chien"], 0) == 0.0

    def test_duplicate_query_terms(self):
        docs = [("a", "chat chat chien"), ("b", "chien"), ("c", "eau")]
        idx = build_index_from_docs(docs, PLAIN)
        single = bm25_score(idx, ["chat"], 0)
        assert bm25_score(idx, ["chat", "chat"], 0) == pytest.approx(2 * single)
        ref = bm25_brute_force([analyze(t, PLAIN) for _, t in docs], ["chat", "chat", "chien"])
        assert bm25_score(idx, ["chat", "chat", "chien"], 0) == ref[0]

    def test_params_validated(self):
        with pytest.raises(ValueError):
            Bm25Params(k1=0)
        with pytest.raises(ValueError):
            Bm25Params(b=1.5)


class TestSearch:
    def test_single_doc(self):
        idx = build_index_from_docs([("only", "eau potable")], PLAIN)
        run = search(idx, Query("q", "eau"), PLAIN)
        assert [(e.doc_id, e.rank) for e in run] == [("only", 1)]

    def test_saturation(self):
        idx = build_index_from_docs([(f"d{i}", "eau") for i in range(10)], PLAIN)
        assert len(search(idx, "eau", PLAIN, k=100)) == 10

    def test_ties_by_doc_id(self):
        idx = build_index_from_docs([("z", "eau"), ("a", "eau"), ("m", "eau")], PLAIN)
        assert [e.doc_id for e in search(idx, "eau", PLAIN)] == ["a", "m", "z"]

    def test_empty_query_warns(self):
        idx = build_index_from_docs([("a", "eau")], AnalyzerConfig())
        with pytest.warns(EmptyQueryWarning):
            assert search(idx, Query("q", "de la")) == []

    def test_matches_brute_force(self):
        rng = random.Random(11)
        docs = random_corpus(rng)
        idx = build_index_from_docs(docs, PLAIN)
        for _ in range(100):
            q = rng.choices(WORDS, k=rng.randint(1, 4))
            k = rng.randint(1, 60)
            got = [(e.doc_id, e.score) for e in search(idx, " ".join(q), PLAIN, k=k)]
            assert got == oracle_topk(docs, q, k)

    @settings(max_examples=50, deadline=None)
    @given(st.lists(st.sampled_from(WORDS), min_size=1, max_size=3), st.integers(1, 30), st.integers(1, 30))
    def test_prefix_property(self, q, k1, k2):
        idx = build_index_from_docs(random_corpus(random.Random(2)), PLAIN)
        small, large = sorted((k1, k2))
        a = search(idx, " ".join(q), PLAIN, k=small)
        b = search(idx, " ".join(q), PLAIN, k=large)
        assert a == b[:small]
        assert all(x.score >= y.score for x, y in zip(b, b[1:]))
        assert [e.rank for e in b] == list(range(1, len(b) + 1))

    def test_unrelated_doc_keeps_topk_set(self):
        docs = random_corpus(random.Random(5), 30)
        q = "chat eau"
        base = {e.doc_id for e in search(build_index_from_docs(docs, PLAIN), q, PLAIN, k=5)}
        more = docs + [("zzz", "pain vin mer")]
        assert {e.doc_id for e in search(build_index_from_docs(more, PLAIN), q, PLAIN, k=5)} == base

    def test_persist_round_trip(self, tmp_path):
        docs = random_corpus(random.Random(9))
        idx = build_index_from_docs(docs, PLAIN)
        idx.save(tmp_path / "idx")
        loaded = InvertedIndex.load(tmp_path / "idx", PLAIN)
        for q in ["chat", "eau pain", "vin vin mer", "absent"]:
            with warnings.catch_warnings():
                warnings.simplefilter("ignore")
                assert search(loaded, q, PLAIN) == search(idx, q, PLAIN)

    def test_load_rejects_other_analyzer(self, tmp_path):
        build_index_from_docs([("a", "eau")], PLAIN).save(tmp_path / "idx")
        with pytest.raises(ValueError, match="analyzer"):
            InvertedIndex.load(tmp_path / "idx", AnalyzerConfig())

    def test_search_terms_bad_k(self):
        idx = build_index_from_docs([("a", "eau")], PLAIN)
        with pytest.raises(ValueError):
            search_terms(idx, ["eau"], 0)
