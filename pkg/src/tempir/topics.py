"""Topic-drift analysis: document sampling, term-document matrices, NMF and LDA.

NMF minimises the squared Frobenius reconstruction error with the
classic multiplicative updates.  LDA is fitted by collapsed Gibbs
sampling with a compiled inner loop fed pre-drawn uniforms, so a fixed
seed gives identical assignments on every run.
"""

from __future__ import annotations

import csv
import logging
import math
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Sequence

import numba
import numpy as np
import scipy.sparse as sp

from .analyzer import AnalyzerConfig, analyze, topic_model_config

log = logging.getLogger(__name__)

EPS = 1e-10
# below this many cells the loss is computed from the dense residual
DENSE_LOSS_CELLS = 4_000_000


# ---------------------------------------------------------------- sampling

def sample_documents(docs: Iterable, sample: int | float, seed: int, population: int | None = None) -> list:
    """Uniform sample without replacement in one reservoir pass.

    ``sample`` is a count, or a fraction in (0, 1) of ``population``
    (taken from ``docs.doc_count`` when not given).
    """
    if isinstance(sample, float) and 0 < sample < 1:
        if population is None:
            population = getattr(docs, "doc_count", None)
        if population is None:
            raise ValueError("a fractional sample needs the population size")
        n = max(1, round(sample * population))
    else:
        n = int(sample)
    if n < 1:
        raise ValueError("sample size must be positive")
    rng = np.random.default_rng(seed)
    reservoir: list = []
    seen = 0
    for item in docs:
        if seen < n:
            reservoir.append(item)
        else:
            j = int(rng.integers(0, seen + 1))
            if j < n:
                reservoir[j] = item
        seen += 1
    if seen < n:
        raise ValueError(f"sample of {n} exceeds population of {seen}")
    return reservoir


# ---------------------------------------------------------------- matrices

@dataclass
class TermDocMatrix:
    X: sp.csr_matrix
    vocab: list[str]
    doc_ids: list[str]

    def __post_init__(self):
        if self.X.shape != (len(self.doc_ids), len(self.vocab)):
            raise ValueError("matrix shape does not match doc ids and vocabulary")
        if self.X.nnz and self.X.data.min() < 0:
            raise ValueError("term-document matrix has negative entries")

    @property
    def shape(self) -> tuple[int, int]:
        return self.X.shape

    def dense(self) -> np.ndarray:
        return self.X.toarray()


def _doc_pair(d, i: int) -> tuple[str, str]:
    if isinstance(d, str):
        return str(i), d
    if isinstance(d, tuple):
        return d
    return d.doc_id, d.text


def build_term_doc_matrix(docs: Sequence, analyzer: AnalyzerConfig | None = None, min_df: int = 1,
                          max_vocab: int | None = None, vocabulary: Sequence[str] | None = None) -> TermDocMatrix:
    """Raw term counts over a lexicographically ordered vocabulary.

    Documents may be strings, ``(doc_id, text)`` pairs or Document objects.
    With ``vocabulary`` the columns are fixed to it (for transforming new
    documents) and the df filters are skipped.
    """
    if not docs:
        raise ValueError("no documents")
    analyzer = analyzer or topic_model_config()
    ids, counts = [], []
    for i, d in enumerate(docs):
        doc_id, text = _doc_pair(d, i)
        ids.append(doc_id)
        counts.append(Counter(analyze(text, analyzer)))
    if vocabulary is None:
        df = Counter(t for c in counts for t in c)
        kept = [t for t, n in df.items() if n >= min_df]
        if max_vocab is not None and len(kept) > max_vocab:
            kept = sorted(kept, key=lambda t: (-df[t], t))[:max_vocab]
        vocab = sorted(kept)
    else:
        vocab = list(vocabulary)
    if not vocab:
        raise ValueError("vocabulary is empty after filtering")
    col = {t: j for j, t in enumerate(vocab)}
    rows, cols, vals = [], [], []
    for i, c in enumerate(counts):
        for t, n in sorted(c.items()):
            j = col.get(t)
            if j is not None:
                rows.append(i)
                cols.append(j)
                vals.append(float(n))
    X = sp.csr_matrix((vals, (rows, cols)), shape=(len(ids), len(vocab)), dtype=np.float64)
    return TermDocMatrix(X, vocab, ids)


def _as_array(X):
    if isinstance(X, TermDocMatrix):
        X = X.X
    if sp.issparse(X):
        X = sp.csr_matrix(X, dtype=np.float64)
        if X.nnz and X.data.min() < 0:
            raise ValueError("X has negative entries")
        return X
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2:
        raise ValueError("X must be two-dimensional")
    if X.size and X.min() < 0:
        raise ValueError("X has negative entries")
    return X


# ---------------------------------------------------------------- NMF

@dataclass
class NmfModel:
    W: np.ndarray
    H: np.ndarray
    loss_trace: list[float] = field(default_factory=list)
    vocab: list[str] | None = None
    doc_ids: list[str] | None = None

    @property
    def k(self) -> int:
        return self.H.shape[0]

    @property
    def loss(self) -> float:
        return self.loss_trace[-1]


def frobenius_loss(X, W: np.ndarray, H: np.ndarray) -> float:
    """Squared Frobenius norm of X - WH."""
    m, n = X.shape
    if m * n <= DENSE_LOSS_CELLS:
        Xd = X.toarray() if sp.issparse(X) else X
        R = Xd - W @ H
        return float(np.sum(R * R))
    # expanded form avoids materialising WH
    xx = float(X.multiply(X).sum()) if sp.issparse(X) else float(np.sum(X * X))
    cross = float(np.sum(W * (X @ H.T)))
    gram = float(np.sum((W.T @ W) * (H @ H.T)))
    return max(xx - 2.0 * cross + gram, 0.0)


def _init_factor(rng: np.random.Generator, shape, scale: float) -> np.ndarray:
    # 1 - U[0, 1) lies in (0, 1], so entries are in (0, scale]
    return scale * (1.0 - rng.random(shape))


def _init_scale(X, k: int) -> float:
    m, n = X.shape
    total = float(X.sum())
    return math.sqrt(total / (m * n) / k) if m * n else 0.0


def _update_W(X, W: np.ndarray, H: np.ndarray) -> np.ndarray:
    return W * (X @ H.T) / (W @ (H @ H.T) + EPS)


def _update_H(X, W: np.ndarray, H: np.ndarray) -> np.ndarray:
    XtW = (X.T @ W).T if sp.issparse(X) else W.T @ X
    return H * XtW / ((W.T @ W) @ H + EPS)


def nmf_fit(X, k: int = 20, max_iters: int = 200, tol: float = 1e-6, seed: int = 0,
            callback: Callable[[int, np.ndarray, np.ndarray], None] | None = None) -> NmfModel:
    """Multiplicative-update NMF; ``loss_trace[0]`` is the loss at initialisation.

    Stops after ``max_iters`` updates or when the relative loss improvement
    drops below ``tol`` (``tol=0`` always runs every iteration).
    """
    vocab = X.vocab if isinstance(X, TermDocMatrix) else None
    doc_ids = X.doc_ids if isinstance(X, TermDocMatrix) else None
    X = _as_array(X)
    m, n = X.shape
    if not 1 <= k <= min(m, n):
        raise ValueError(f"k={k} must be between 1 and min(m, n)={min(m, n)}")
    rng = np.random.default_rng(seed)
    s = _init_scale(X, k)
    W = _init_factor(rng, (m, k), s)
    H = _init_factor(rng, (k, n), s)
    trace = [frobenius_loss(X, W, H)]
    for it in range(1, max_iters + 1):
        H = _update_H(X, W, H)
        W = _update_W(X, W, H)
        trace.append(frobenius_loss(X, W, H))
        if callback is not None:
            callback(it, W, H)
        prev, cur = trace[-2], trace[-1]
        if tol > 0 and (prev == 0 or (prev - cur) / prev < tol):
            break
    return NmfModel(W, H, trace, vocab, doc_ids)


def nmf_transform(model: NmfModel, X_new, max_iters: int = 1000, tol: float = 1e-8, seed: int = 0) -> np.ndarray:
    """Doc-topic weights for new rows with H held fixed."""
    if isinstance(X_new, TermDocMatrix) and model.vocab is not None and X_new.vocab != model.vocab:
        raise ValueError("vocabulary of X_new does not match the model")
    X = _as_array(X_new)
    if X.shape[1] != model.H.shape[1]:
        raise ValueError(f"X_new has {X.shape[1]} columns, model has {model.H.shape[1]}")
    rng = np.random.default_rng(seed)
    W = _init_factor(rng, (X.shape[0], model.k), _init_scale(X, model.k))
    prev = frobenius_loss(X, W, model.H)
    for _ in range(max_iters):
        W = _update_W(X, W, model.H)
        cur = frobenius_loss(X, W, model.H)
        if tol > 0 and (prev == 0 or (prev - cur) / prev < tol):
            break
        prev = cur
    return W


# ---------------------------------------------------------------- LDA

@numba.njit(cache=True)
def _gibbs_sweep(doc_ptr, words, z, ndk, nkw, nk, uniforms, alpha, eta, V):
    K = nk.shape[0]
    p = np.empty(K)
    veta = V * eta
    for d in range(doc_ptr.shape[0] - 1):
        for i in range(doc_ptr[d], doc_ptr[d + 1]):
            w = words[i]
            k = z[i]
            ndk[d, k] -= 1
            nkw[k, w] -= 1
            nk[k] -= 1
            total = 0.0
            for t in range(K):
                total += (ndk[d, t] + alpha) * (nkw[t, w] + eta) / (nk[t] + veta)
                p[t] = total
            u = uniforms[i] * total
            k = K - 1
            for t in range(K):
                if u < p[t]:
                    k = t
                    break
            z[i] = k
            ndk[d, k] += 1
            nkw[k, w] += 1
            nk[k] += 1


class LdaInvariantError(AssertionError):
    pass


@dataclass
class LdaModel:
    K: int
    V: int
    alpha: float
    eta: float
    z: np.ndarray
    ndk: np.ndarray
    nkw: np.ndarray
    nk: np.ndarray
    doc_lengths: np.ndarray
    doc_index: list[int]
    vocab: list[str] | None = None
    sweeps: int = 0

    @property
    def beta(self) -> np.ndarray:
        b = self.nkw + self.eta
        return b / b.sum(axis=1, keepdims=True)

    @property
    def theta(self) -> np.ndarray:
        t = self.ndk + self.alpha
        return t / t.sum(axis=1, keepdims=True)

    def check_invariants(self, words: np.ndarray) -> None:
        if not np.array_equal(self.ndk.sum(axis=1), self.doc_lengths):
            raise LdaInvariantError("doc-topic counts do not sum to document lengths")
        if not np.array_equal(self.nkw.sum(axis=1), self.nk):
            raise LdaInvariantError("topic-word counts do not sum to topic totals")
        if not np.array_equal(self.ndk.sum(axis=0), self.nk):
            raise LdaInvariantError("doc-topic and topic totals disagree")
        if not np.array_equal(self.nkw.sum(axis=0), np.bincount(words, minlength=self.V)):
            raise LdaInvariantError("topic-word counts disagree with word occurrences")
        if self.ndk.min() < 0 or self.nkw.min() < 0:
            raise LdaInvariantError("negative count")


def term_doc_to_tokens(tdm: TermDocMatrix) -> list[list[int]]:
    """Expand count rows to token-id sequences (column order within a doc)."""
    X = sp.csr_matrix(tdm.X)
    out = []
    for i in range(X.shape[0]):
        lo, hi = X.indptr[i], X.indptr[i + 1]
        seq = []
        for j, c in zip(X.indices[lo:hi], X.data[lo:hi]):
            seq.extend([int(j)] * int(c))
        out.append(seq)
    return out


def lda_fit(docs: Sequence[Sequence[int]], K: int = 20, alpha: float | None = None, eta: float = 0.01,
            sweeps: int = 500, seed: int = 0, V: int | None = None, vocab: list[str] | None = None,
            check: bool = True, callback: Callable[[int, LdaModel], None] | None = None) -> LdaModel:
    """Collapsed Gibbs LDA over token-id documents.

    ``alpha`` defaults to 50/K.  Empty documents are skipped;
    ``doc_index`` maps model rows back to input positions.  With ``check``
    the count invariants are verified after every sweep.
    """
    if K < 2:
        raise ValueError("K must be >= 2")
    if alpha is None:
        alpha = 50.0 / K
    kept = [i for i, d in enumerate(docs) if len(d)]
    if len(kept) < len(docs):
        log.warning("skipping %d empty document(s)", len(docs) - len(kept))
    words = np.asarray([w for i in kept for w in docs[i]], dtype=np.int64)
    if V is None:
        V = len(vocab) if vocab is not None else (int(words.max()) + 1 if words.size else 0)
    if V == 0:
        raise ValueError("vocabulary is empty")
    if words.size and (words.min() < 0 or words.max() >= V):
        raise ValueError("token id outside vocabulary")
    if K > words.size:
        raise ValueError(f"K={K} exceeds total token count {words.size}")
    lengths = np.asarray([len(docs[i]) for i in kept], dtype=np.int64)
    doc_ptr = np.concatenate([[0], np.cumsum(lengths)]).astype(np.int64)

    rng = np.random.default_rng(seed)
    z = rng.integers(0, K, size=words.size).astype(np.int64)
    D = len(kept)
    ndk = np.zeros((D, K), dtype=np.int64)
    nkw = np.zeros((K, V), dtype=np.int64)
    doc_of = np.repeat(np.arange(D), lengths)
    np.add.at(ndk, (doc_of, z), 1)
    np.add.at(nkw, (z, words), 1)
    nk = nkw.sum(axis=1)
    model = LdaModel(K, V, float(alpha), float(eta), z, ndk, nkw, nk, lengths, kept, vocab)
    if check:
        model.check_invariants(words)
    for s in range(1, sweeps + 1):
        _gibbs_sweep(doc_ptr, words, z, ndk, nkw, nk, rng.random(words.size), float(alpha), float(eta), V)
        model.sweeps = s
        if check:
            model.check_invariants(words)
        if callback is not None:
            callback(s, model)
    return model


# ---------------------------------------------------------------- export

def topic_weights(model: NmfModel | LdaModel) -> np.ndarray:
    return model.H if isinstance(model, NmfModel) else model.beta


def top_words(model: NmfModel | LdaModel, topic: int, n: int = 100, vocab: Sequence[str] | None = None) -> list[str]:
    """Highest-weight terms of one topic, ties in lexicographic order."""
    weights = topic_weights(model)
    if not 0 <= topic < weights.shape[0]:
        raise IndexError(f"topic {topic} out of range 0..{weights.shape[0] - 1}")
    vocab = vocab if vocab is not None else model.vocab
    if vocab is None:
        vocab = [str(j) for j in range(weights.shape[1])]
    row = weights[topic]
    order = sorted(range(len(vocab)), key=lambda j: (-row[j], vocab[j]))
    return [vocab[j] for j in order[:n]]


def write_loss_trace(trace: Sequence[float], path: str | Path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("iteration", "loss"))
        for i, v in enumerate(trace):
            w.writerow([i, repr(float(v))])


def write_doc_topics(doc_ids: Sequence[str], weights: np.ndarray, path: str | Path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["doc_id"] + [f"topic_{t}" for t in range(weights.shape[1])])
        for d, row in zip(doc_ids, weights):
            w.writerow([d] + [f"{v:.10g}" for v in row])


def read_doc_topics(path: str | Path) -> tuple[list[str], np.ndarray]:
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise ValueError(f"{path} is empty")
    ids = [r[0] for r in rows[1:]]
    data = np.asarray([[float(v) for v in r[1:]] for r in rows[1:]], dtype=np.float64)
    return ids, data.reshape(len(ids), len(rows[0]) - 1)


def write_top_words(model: NmfModel | LdaModel, out_dir: str | Path, n: int = 100) -> list[Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = []
    k = topic_weights(model).shape[0]
    for t in range(k):
        p = out / f"topic_{t:02d}.txt"
        p.write_text("\n".join(top_words(model, t, n)) + "\n", encoding="utf-8")
        paths.append(p)
    return paths
