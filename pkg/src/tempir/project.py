"""Two-dimensional projections of doc-topic weights for drift scatter plots."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

METHODS = ("pca", "grp")


@dataclass
class ProjectionResult:
    coords: np.ndarray
    dominant: np.ndarray
    method: str
    seed: int | None = None
    components: np.ndarray | None = None
    mean: np.ndarray | None = None
    eigenvalues: np.ndarray | None = None

    def reconstruct(self) -> np.ndarray:
        """Back-projection into the input space (PCA only)."""
        if self.components is None:
            raise ValueError("only PCA projections can be reconstructed")
        return self.mean + self.coords @ self.components


def jacobi_eigh(A: np.ndarray, tol: float = 1e-15, max_sweeps: int = 100) -> tuple[np.ndarray, np.ndarray]:
    """Eigenvalues (descending) and column eigenvectors of a symmetric matrix by cyclic Jacobi rotations."""
    A = np.array(A, dtype=np.float64)
    n = A.shape[0]
    if A.shape != (n, n) or not np.allclose(A, A.T, rtol=0, atol=1e-12 * max(1.0, np.abs(A).max())):
        raise ValueError("matrix must be square and symmetric")
    V = np.eye(n)
    scale = max(np.linalg.norm(A), 1e-300)
    for _ in range(max_sweeps):
        off = np.sqrt(np.sum(np.triu(A, 1) ** 2))
        if off <= tol * scale:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                if A[p, q] == 0.0:
                    continue
                theta = (A[q, q] - A[p, p]) / (2.0 * A[p, q])
                t = np.sign(theta) / (abs(theta) + np.sqrt(theta * theta + 1.0)) if theta != 0 else 1.0
                c = 1.0 / np.sqrt(t * t + 1.0)
                s = t * c
                J = np.eye(n)
                J[p, p] = J[q, q] = c
                J[p, q], J[q, p] = s, -s
                A = J.T @ A @ J
                V = V @ J
    vals = np.diag(A).copy()
    order = sorted(range(n), key=lambda i: -vals[i])
    return vals[order], V[:, order]


def _fix_signs(components: np.ndarray) -> np.ndarray:
    out = components.copy()
    for i, row in enumerate(out):
        j = int(np.argmax(np.abs(row)))
        if row[j] < 0:
            out[i] = -row
    return out


def dominant_topic(row: Sequence[float]) -> int:
    """Index of the largest weight, lowest index on ties."""
    row = np.asarray(row, dtype=np.float64)
    if row.size == 0:
        raise ValueError("empty weight row")
    return int(np.argmax(row))


def _dominant_all(rows: np.ndarray) -> np.ndarray:
    return np.argmax(rows, axis=1).astype(np.int64) if rows.size else np.zeros(0, dtype=np.int64)


def row_normalize(rows: np.ndarray) -> np.ndarray:
    """Scale each row to sum 1; all-zero rows stay zero."""
    rows = np.asarray(rows, dtype=np.float64)
    s = rows.sum(axis=1, keepdims=True)
    return np.divide(rows, s, out=np.zeros_like(rows), where=s > 0)


def pca_2d(rows) -> ProjectionResult:
    X = np.asarray(rows, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] < 2 or X.shape[1] < 2:
        raise ValueError("PCA needs at least 2 rows and 2 columns")
    mean = X.mean(axis=0)
    Xc = X - mean
    cov = Xc.T @ Xc / (X.shape[0] - 1)
    if not np.any(cov):
        raise ValueError("input has zero variance (all rows identical)")
    vals, vecs = jacobi_eigh(cov)
    comps = _fix_signs(vecs[:, :2].T)
    return ProjectionResult(Xc @ comps.T, _dominant_all(X), "pca", None, comps, mean, vals)


def grp_matrix(k: int, seed: int, d_target: int = 2) -> np.ndarray:
    rng = np.random.default_rng(seed)
    return rng.normal(0.0, 1.0 / np.sqrt(d_target), size=(k, d_target))


def grp_2d(rows, seed: int) -> ProjectionResult:
    X = np.asarray(rows, dtype=np.float64)
    if X.ndim == 1:
        X = X[None, :]
    if X.shape[1] < 1:
        raise ValueError("GRP needs at least one column")
    return ProjectionResult(X @ grp_matrix(X.shape[1], seed), _dominant_all(X), "grp", seed)


def project(rows, method: str, seed: int = 0, normalize: bool = False) -> ProjectionResult:
    if method not in METHODS:
        raise ValueError(f"method must be one of {METHODS}")
    X = row_normalize(rows) if normalize else np.asarray(rows, dtype=np.float64)
    return pca_2d(X) if method == "pca" else grp_2d(X, seed)


def write_scatter(doc_ids: Sequence[str], result: ProjectionResult, path: str | Path, snapshot: str = "") -> None:
    if len(doc_ids) != len(result.coords):
        raise ValueError("doc id count differs from projected row count")
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("doc_id", "x", "y", "dominant_topic", "method", "snapshot"))
        for d, (x, y), t in zip(doc_ids, result.coords, result.dominant):
            w.writerow([d, f"{x:.12g}", f"{y:.12g}", int(t), result.method, snapshot])
