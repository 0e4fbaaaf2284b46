"""Working copy of a pencil that records the row and column operations applied to it."""
from __future__ import annotations

import numpy as np

from .core import Decomposition, ModeTransform, Pencil, RankOneTerm, pull_back


class Frame:
    """Mutable pencil ``(L A R, L B R)`` together with the accumulated ``L`` and ``R``."""

    def __init__(self, T: Pencil):
        self.A = np.array(T.A, dtype=float)
        self.B = np.array(T.B, dtype=float)
        self.L = np.eye(T.m)
        self.R = np.eye(T.n)

    @property
    def m(self) -> int:
        return self.A.shape[0]

    @property
    def n(self) -> int:
        return self.A.shape[1]

    def fiber(self, i: int, j: int) -> np.ndarray:
        return np.array([self.A[i, j], self.B[i, j]])

    def fibers_row(self, i: int) -> np.ndarray:
        """2 x n matrix whose columns are the fibers of row ``i``."""
        return np.vstack([self.A[i], self.B[i]])

    def left(self, M) -> None:
        M = np.asarray(M, dtype=float)
        self.A, self.B, self.L = M @ self.A, M @ self.B, M @ self.L

    def right(self, M) -> None:
        M = np.asarray(M, dtype=float)
        self.A, self.B, self.R = self.A @ M, self.B @ M, self.R @ M

    def row_add(self, i: int, j: int, c: float) -> None:
        """row_i += c * row_j"""
        for X in (self.A, self.B, self.L):
            X[i] += c * X[j]

    def row_scale(self, i: int, c: float) -> None:
        for X in (self.A, self.B, self.L):
            X[i] *= c

    def col_add(self, j: int, k: int, c: float) -> None:
        """col_j += c * col_k"""
        for X in (self.A, self.B, self.R):
            X[:, j] += c * X[:, k]

    def col_scale(self, j: int, c: float) -> None:
        for X in (self.A, self.B, self.R):
            X[:, j] *= c

    def col_swap(self, j: int, k: int) -> None:
        for X in (self.A, self.B, self.R):
            X[:, [j, k]] = X[:, [k, j]]

    def pencil(self) -> Pencil:
        return Pencil(self.A, self.B)

    def transform(self) -> ModeTransform:
        return ModeTransform(np.eye(2), self.L, self.R)

    def pull_back(self, terms: list[RankOneTerm]) -> Decomposition:
        """Turn terms of the working pencil into a decomposition of the original."""
        return pull_back(Decomposition(self.m, self.n, terms), self.transform())


def unit(k: int, i: int) -> np.ndarray:
    e = np.zeros(k)
    e[i] = 1.0
    return e


def rotation(t: float) -> np.ndarray:
    c, s = np.cos(t), np.sin(t)
    return np.array([[c, -s], [s, c]])


def orth(X: np.ndarray, tol: float, scale: float | None = None) -> np.ndarray:
    """Orthonormal basis of the column space of ``X`` (rank decided against ``scale``)."""
    if X.size == 0:
        return np.zeros((X.shape[0], 0))
    U, s, _ = np.linalg.svd(X, full_matrices=False)
    ref = s[0] if scale is None else scale
    if ref == 0:
        return np.zeros((X.shape[0], 0))
    return U[:, s > tol * ref]


def complement(Q: np.ndarray) -> np.ndarray:
    """Orthonormal basis of the orthogonal complement of the orthonormal columns ``Q``."""
    k = Q.shape[0]
    if Q.shape[1] == 0:
        return np.eye(k)
    U, _, _ = np.linalg.svd(Q, full_matrices=True)
    return U[:, Q.shape[1]:]


def best_direction(M0: np.ndarray, M1: np.ndarray, steps: int = 90, k: int = -1):
    """Unit ``(c, s)`` maximizing the ``k``-th singular value of ``c*M0 + s*M1``.

    The first axis direction is kept whenever it reaches half of the best value,
    so already-normalized inputs are left alone.
    """
    def score(t):
        return np.linalg.svd(np.cos(t) * M0 + np.sin(t) * M1, compute_uv=False)[k]

    ts = np.linspace(0.0, np.pi, steps, endpoint=False)
    scores = [score(t) for t in ts]
    i = int(np.argmax(scores))
    if scores[0] >= 0.5 * scores[i]:
        i = 0
    return float(np.cos(ts[i])), float(np.sin(ts[i])), float(scores[i])
