import math
import random

import pytest
from hypothesis import given, strategies as st

from oracles import idcg_brute_force, ndcg_reference
from tempir.evaluation import (FormatError, QrelEntry, RunEntry, aggregate, dcg_at_k, evaluate_run, format_run_line,
                               ndcg_at_k, read_qrels, read_report_matrix, read_run, relative_ndcg_drop,
                               write_report, write_run)


def make_run(docs, qid="q"):
    return [RunEntry(qid, d, i, float(len(docs) - i), "t") for i, d in enumerate(docs, 1)]


def random_instance(rng):
    n = rng.randint(0, 20)
    pool = [f"d{i}" for i in range(25)]
    ranked = rng.sample(pool, n)
    judged = {d: rng.randint(0, 2) for d in rng.sample(pool, rng.randint(0, 20))}
    return ranked, judged


class TestDcg:
    def test_hand(self):
        assert dcg_at_k([2, 0, 1], 3) == pytest.approx(2.5)

    def test_single(self):
        assert dcg_at_k([3], 1) == 3

    def test_empty(self):
        assert dcg_at_k([], 5) == 0.0

    def test_exp_gain(self):
        assert dcg_at_k([2, 1], 2, "exp") == pytest.approx(3 + 1 / math.log2(3))

    def test_bad_k(self):
        with pytest.raises(ValueError):
            dcg_at_k([1], 0)


class TestNdcg:
    def test_hand_case(self):
        run = make_run(["a", "b", "c"])
        assert ndcg_at_k(run, {"a": 2, "b": 0, "c": 1}, 3) == pytest.approx(0.95024, abs=1e-5)

    def test_ideal(self):
        assert ndcg_at_k(make_run(["a", "c", "b"]), {"a": 2, "b": 0, "c": 1}, 3) == 1.0

    def test_all_zero(self):
        assert ndcg_at_k(make_run(["a"]), {"a": 0, "b": 0}) == 0.0

    def test_unretrieved_relevant_penalised(self):
        assert ndcg_at_k(make_run(["a"]), {"a": 1, "b": 2}) < 1.0

    def test_qrel_entries_filtered_by_qid(self):
        qrels = [QrelEntry("q", "a", 1), QrelEntry("other", "b", 2)]
        assert ndcg_at_k(make_run(["a"]), qrels) == 1.0

    def test_oracle_equivalence(self):
        rng = random.Random(7)
        for _ in range(500):
            ranked, judged = random_instance(rng)
            assert abs(ndcg_at_k(make_run(ranked), judged, 10) - ndcg_reference(ranked, judged, 10)) < 1e-9

    def test_ideal_dcg_is_maximal(self):
        rng = random.Random(3)
        for _ in range(100):
            grades = [rng.randint(0, 2) for _ in range(rng.randint(1, 7))]
            assert dcg_at_k(sorted(grades, reverse=True), 5) == pytest.approx(idcg_brute_force(grades, 5))

    @given(st.lists(st.integers(0, 2), max_size=15), st.integers(1, 12))
    def test_bounded(self, grades, k):
        docs = [f"d{i}" for i in range(len(grades))]
        v = ndcg_at_k(make_run(docs), dict(zip(docs, grades)), k)
        assert 0.0 <= v <= 1.0 + 1e-12

    def test_repeated_doc_earns_nothing(self):
        run = [RunEntry("q", "a", 1, 2.0, "t"), RunEntry("q", "a", 2, 1.0, "t")]
        assert ndcg_at_k(run, {"a": 2, "b": 2}) < 1.0

    @given(st.lists(st.integers(0, 2), min_size=2, max_size=12), st.floats(0.01, 100))
    def test_score_scaling_invariant(self, grades, c):
        docs = [f"d{i}" for i in range(len(grades))]
        run = make_run(docs)
        scaled = [RunEntry(e.qid, e.doc_id, e.rank, e.score * c, e.tag) for e in run]
        j = dict(zip(docs, grades))
        assert ndcg_at_k(run, j) == ndcg_at_k(scaled, j)

    @given(st.lists(st.integers(0, 2), min_size=2, max_size=12), st.data())
    def test_fixing_inversion_never_hurts(self, grades, data):
        i = data.draw(st.integers(0, len(grades) - 2))
        j = data.draw(st.integers(i + 1, len(grades) - 1))
        docs = [f"d{n}" for n in range(len(grades))]
        judged = dict(zip(docs, grades))
        if grades[i] >= grades[j]:
            return
        swapped = list(docs)
        swapped[i], swapped[j] = swapped[j], swapped[i]
        assert ndcg_at_k(make_run(swapped), judged) >= ndcg_at_k(make_run(docs), judged) - 1e-12


class TestAggregate:
    def test_hand(self):
        assert aggregate([1.0, 0.0, 0.5]) == (0.5, 0.5)

    def test_single(self):
        assert aggregate([0.3]) == (0.3, 0.0)

    def test_empty(self):
        with pytest.raises(ValueError):
            aggregate([])

    @pytest.mark.parametrize("a,b,want", [(0.30, 0.27, 0.1), (0.4, 0.4, 0.0), (0.2, 0.3, -0.5)])
    def test_drop(self, a, b, want):
        assert relative_ndcg_drop(a, b) == pytest.approx(want)

    def test_drop_zero_reference(self):
        with pytest.raises(ZeroDivisionError):
            relative_ndcg_drop(0.0, 0.1)


class TestFormats:
    def test_parse_line(self, tmp_path):
        p = tmp_path / "run.txt"
        p.write_text("q1 Q0 doc7 1 12.500000 bm25\n")
        assert read_run(p) == [RunEntry("q1", "doc7", 1, 12.5, "bm25")]

    def test_five_columns(self, tmp_path):
        p = tmp_path / "run.txt"
        p.write_text("q1 Q0 doc7 1 12.5 bm25\nq1 Q0 doc8 2 11.0\n")
        with pytest.raises(FormatError, match=":2:"):
            read_run(p)

    def test_rank_gap(self, tmp_path):
        p = tmp_path / "run.txt"
        p.write_text("q1 Q0 a 1 2.0 t\nq1 Q0 b 3 1.0 t\n")
        with pytest.raises(FormatError, match="rank gap"):
            read_run(p)

    def test_qrels_errors(self, tmp_path):
        p = tmp_path / "qrels.txt"
        p.write_text("q 0 a 1\nq 0 a 2\n")
        with pytest.raises(FormatError, match="duplicate"):
            read_qrels(p)
        p.write_text("q 0 a -1\n")
        with pytest.raises(FormatError):
            read_qrels(p)

    def test_run_round_trip(self, tmp_path):
        rng = random.Random(1)
        entries = []
        for q in range(10):
            for r in range(1, 11):
                entries.append(RunEntry(f"q{q}", f"d{rng.randint(0, 999)}", r, round(rng.uniform(0, 50), 6), "x"))
        write_run(entries, tmp_path / "a")
        assert read_run(tmp_path / "a") == entries

    def test_score_format(self):
        assert format_run_line(RunEntry("q", "d", 1, 1 / 3, "t")) == "q Q0 d 1 0.333333 t\n"


class TestReports:
    def test_evaluate_run_scores_judged_queries(self):
        run = make_run(["a"], "q1")
        qrels = [QrelEntry("q1", "a", 1), QrelEntry("q2", "b", 1)]
        rep = evaluate_run(run, qrels)
        assert rep.per_query == {"q1": 1.0, "q2": 0.0}
        assert rep.mean == 0.5

    def test_report_csv_with_null(self, tmp_path):
        from tempir.evaluation import EvalReport
        reps = [EvalReport("bm25", "2022-06", 10, {"q": 0.5}), EvalReport("bm25", "2022-08", 10)]
        write_report(reps, tmp_path / "r.csv", tmp_path / "pq.csv")
        m = read_report_matrix(tmp_path / "r.csv")
        assert m == {"2022-06": {"bm25": 0.5}, "2022-08": {"bm25": None}}
        assert (tmp_path / "pq.csv").read_text().splitlines()[1] == "bm25,2022-06,q,0.500000"
