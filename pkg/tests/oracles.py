"""Independent reference implementations used by the tests."""

import itertools
import math


def ndcg_reference(ranked_docs, judgments, k=10):
    """nDCG@k written directly from the definition.

    ``ranked_docs`` is the run order, ``judgments`` a doc -> grade dict.
    The ideal DCG places grade counts from high to low; no sorting of the
    run code path is shared with the package.
    """
    def discount(pos):  # 1-based
        return 1.0 / (math.log(pos + 1) / math.log(2))

    dcg, used = 0.0, set()
    for pos in range(1, min(k, len(ranked_docs)) + 1):
        d = ranked_docs[pos - 1]
        if d not in used:
            dcg += judgments.get(d, 0) * discount(pos)
        used.add(d)
    grades = []
    for g in range(max(judgments.values(), default=0), 0, -1):
        grades += [g] * sum(1 for v in judgments.values() if v == g)
    idcg = sum(g * discount(i) for i, g in enumerate(grades[:k], 1))
    return 0.0 if idcg == 0 else dcg / idcg


def idcg_brute_force(grades, k=10):
    """Maximum DCG@k over every ordering of the grades (small inputs only)."""
    best = 0.0
    for perm in itertools.permutations(grades):
        best = max(best, sum(g / math.log2(i + 1) for i, g in enumerate(perm[:k], 1)))
    return best


def bm25_brute_force(docs, query_terms, k1=0.9, b=0.4):
    """Score every doc (list of term lists) for a bag of query terms."""
    N = len(docs)
    avgdl = sum(len(d) for d in docs) / N
    scores = []
    for d in docs:
        s = 0.0
        for t in query_terms:
            tf = d.count(t)
            if tf == 0:
                continue
            df = sum(1 for other in docs if t in other)
            idf = math.log(1 + (N - df + 0.5) / (df + 0.5))
            s += idf * tf * (k1 + 1) / (tf + k1 * (1 - b + b * len(d) / avgdl))
        scores.append(s)
    return scores
