import numpy as np
import pytest
from hypothesis import given, strategies as st

from tempir.collection import (ClickSession, Query, Topic, estimate_all, estimate_attractiveness,
                               filter_by_assessments, grade_from_alpha, load_topics, match_queries_to_topics,
                               qrels_from_clicks, read_click_log, read_queries, select_top_k_queries,
                               simulate_cascade, write_click_log, write_queries)
from tempir.evaluation import QrelEntry

EAU = Topic(1, "eau")


def first_eligible(sessions, doc, n):
    """Shortest prefix of ``sessions`` with ``n`` sessions eligible for ``doc``."""
    out, count = [], 0
    for s in sessions:
        out.append(s)
        if doc in s.displayed[:s.deepest_click]:
            count += 1
            if count == n:
                return out
    raise AssertionError(f"only {count} eligible sessions")


class TestMatching:
    def test_substring(self):
        qs = [Query("1", "eau potable"), Query("2", "voiture rouge")]
        tq = match_queries_to_topics(qs, [EAU])
        assert tq.qids(1) == {"1"}

    def test_substring_pitfall(self):
        tq = match_queries_to_topics([Query("1", "château bordeaux")], [EAU], "substring")
        assert tq.qids(1) == {"1"}

    def test_word_boundary(self):
        tq = match_queries_to_topics([Query("1", "château bordeaux")], [EAU], "word-boundary")
        assert tq.qids(1) == set()

    def test_case_folded(self):
        tq = match_queries_to_topics([Query("1", "prix de l'eau")], [Topic(1, "Eau")])
        assert tq.qids(1) == {"1"}

    def test_union_and_empty_topics(self):
        qs = [Query("1", "eau et terre"), Query("2", "terre")]
        tq = match_queries_to_topics(qs, [EAU, Topic(2, "terre")])
        assert [q.qid for q in tq.union()] == ["1", "2"]
        with pytest.raises(ValueError):
            match_queries_to_topics(qs, [])

    def test_duplicate_qid(self):
        with pytest.raises(ValueError):
            match_queries_to_topics([Query("1", "a"), Query("1", "b")], [EAU])

    @given(st.lists(st.text(alphabet="eau bordchâtiv", max_size=20), max_size=15),
           st.sampled_from(["eau", "bord", "château", "ea"]))
    def test_substring_superset(self, texts, topic):
        qs = [Query(str(i), t) for i, t in enumerate(texts)]
        sub = match_queries_to_topics(qs, [Topic(1, topic)], "substring").qids(1)
        word = match_queries_to_topics(qs, [Topic(1, topic)], "word-boundary").qids(1)
        assert word <= sub
        assert sub == {q.qid for q in qs if topic in q.text.casefold()}

    def test_bundled_topics(self):
        topics = load_topics()
        assert len(topics) == 28
        assert topics[0].text == "Eau"


class TestSelection:
    def map_of(self, freqs):
        qs = [Query(q, f"eau {q}", f) for q, f in freqs.items()]
        return match_queries_to_topics(qs, [EAU])

    def test_ties_by_qid(self):
        tq = select_top_k_queries(self.map_of({"q1": 10, "q2": 5, "q3": 5}), 2)
        assert tq.qids(1) == {"q1", "q2"}

    def test_exhaustive_sort_check(self):
        rng = np.random.default_rng(0)
        for _ in range(50):
            freqs = {f"q{i}": int(rng.integers(0, 4)) for i in range(8)}
            k = int(rng.integers(1, 9))
            got = select_top_k_queries(self.map_of(freqs), k).qids(1)
            cutoff = sorted(freqs.items(), key=lambda kv: (-kv[1], kv[0]))[:k]
            assert got == {q for q, _ in cutoff}

    def test_saturation_and_identity(self):
        assert select_top_k_queries(self.map_of({"a": 1, "b": 2}), 10).qids(1) == {"a", "b"}
        assert select_top_k_queries(self.map_of({"a": 1}), 1).qids(1) == {"a"}
        with pytest.raises(ValueError):
            select_top_k_queries(self.map_of({"a": 1}), 0)

    def test_assessment_filter(self):
        qs = [Query("a", "x"), Query("b", "y")]
        qrels = [QrelEntry("a", f"d{i}", 0) for i in range(10)] + [QrelEntry("b", f"d{i}", 1) for i in range(9)]
        assert [q.qid for q in filter_by_assessments(qs, qrels, 10)] == ["a"]
        assert filter_by_assessments(qs, [], 10) == []


class TestClickModel:
    def test_eligibility(self):
        s = ClickSession("q", ("d1", "d2", "d3"), frozenset({2}))
        assert estimate_attractiveness([s], "q", "d1").alpha == 0.0
        assert estimate_attractiveness([s], "q", "d2").alpha == 1.0
        assert estimate_attractiveness([s], "q", "d3") is None

    def test_half(self):
        sessions = [ClickSession("q", ("d",), frozenset({1}))] * 2 + \
                   [ClickSession("q", ("d", "e"), frozenset({2}))] * 2
        est = estimate_attractiveness(sessions, "q", "d")
        assert (est.alpha, est.support) == (0.5, 4)

    def test_no_click_sessions_excluded(self):
        sessions = [ClickSession("q", ("d",))] * 5 + [ClickSession("q", ("d",), frozenset({1}))]
        est = estimate_attractiveness(sessions, "q", "d")
        assert (est.alpha, est.support) == (1.0, 1)

    def test_deepest_click_for_multi_click(self):
        s = ClickSession("q", ("a", "b", "c"), frozenset({1, 3}))
        assert {e.doc_id: e.alpha for e in estimate_all([s])} == {"a": 1.0, "b": 0.0, "c": 1.0}

    def test_session_invariants(self):
        with pytest.raises(ValueError):
            ClickSession("q", ())
        with pytest.raises(ValueError):
            ClickSession("q", ("a",), frozenset({2}))

    @given(st.lists(st.tuples(st.lists(st.sampled_from("abcde"), min_size=1, max_size=5, unique=True),
                              st.integers(0, 5)), max_size=20))
    def test_estimates_in_unit_interval(self, raw):
        sessions = [ClickSession("q", tuple(d), frozenset({c}) if 1 <= c <= len(d) else frozenset())
                    for d, c in raw]
        for e in estimate_all(sessions):
            assert 0.0 <= e.alpha <= 1.0 and e.support >= 1
            ref = estimate_attractiveness(sessions, e.qid, e.doc_id)
            assert (ref.alpha, ref.support) == (e.alpha, e.support)

    @pytest.mark.parametrize("alpha", [0.1, 0.5, 0.9])
    def test_planted_recovery(self, alpha):
        rng = np.random.default_rng(int(alpha * 10))
        planted = {"target": alpha, "x": 0.3, "y": 0.6}
        sessions = first_eligible(simulate_cascade("q", planted, 6000, rng), "target", 2000)
        est = estimate_attractiveness(sessions, "q", "target")
        assert est.support == 2000
        assert abs(est.alpha - alpha) < 0.05

    def test_click_log_round_trip(self, tmp_path):
        sessions = [ClickSession("q1", ("a", "b"), frozenset({2})), ClickSession("q2", ("c",))]
        write_click_log(sessions, tmp_path / "log.jsonl")
        assert read_click_log(tmp_path / "log.jsonl") == sessions

    def test_bad_click_log(self, tmp_path):
        (tmp_path / "log.jsonl").write_text('{"qid": "q", "displayed": ["a"], "clicked": [3]}\n')
        with pytest.raises(ValueError, match=":1:"):
            read_click_log(tmp_path / "log.jsonl")


class TestGrades:
    @pytest.mark.parametrize("alpha,grade", [(0.0, 0), (0.5, 1), (1.0, 2), (1 / 3, 1), (2 / 3, 2)])
    def test_thresholds(self, alpha, grade):
        assert grade_from_alpha(alpha) == grade

    @given(st.floats(0, 1), st.floats(0, 1))
    def test_monotone(self, a, b):
        lo, hi = sorted((a, b))
        assert grade_from_alpha(lo) <= grade_from_alpha(hi)

    @pytest.mark.parametrize("bad", [(0.5, 0.5), (0.7, 0.2), (-0.1, 0.5), (0.2, 1.1)])
    def test_invalid_thresholds(self, bad):
        with pytest.raises(ValueError):
            grade_from_alpha(0.5, bad)

    def test_qrels_skip_unsupported(self):
        s = ClickSession("q", ("d1", "d2", "d3"), frozenset({1}))
        assert qrels_from_clicks([s]) == [QrelEntry("q", "d1", 2)]


def test_query_file_round_trip(tmp_path):
    qs = [Query("q1", "eau potable", 3), Query("q2", "voiture", 0)]
    write_queries(qs, tmp_path / "q.tsv", with_frequency=True)
    assert read_queries(tmp_path / "q.tsv") == qs
