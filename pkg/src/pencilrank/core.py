"""Data model for 2 x m x n tensors viewed as matrix pencils.

A tensor with two slices is stored as the pair ``(A, B)`` of m x n matrices.
Rank-one terms, decompositions, and invertible changes of basis on the three
modes live here, together with reconstruction, residuals and the closed-form
maximal-rank bound.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Any, Iterable, Sequence

import numpy as np

#: Relative tolerance (against the largest singular value) for rank decisions.
RANK_TOL = 1e-9
#: Largest condition number accepted for a mode transform factor.
TRANSFORM_COND_MAX = 1e13
#: Floor for the residual denominator.
EPS_FLOOR = 1e-300


class PencilError(Exception):
    """Base class for errors raised by this package."""


class ShapeError(PencilError, ValueError):
    """Dimensions of the inputs do not agree."""


class SingularTransformError(PencilError, ValueError):
    """A mode transform factor is singular or too badly conditioned."""


class FormatError(PencilError, ValueError):
    """A JSON document does not describe a valid pencil or decomposition."""


def _as_matrix(x, name: str) -> np.ndarray:
    arr = np.array(x, dtype=float)
    if arr.ndim != 2:
        raise ShapeError(f"{name} must be a 2-d matrix, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} has non-finite entries")
    arr.setflags(write=False)
    return arr


def _as_vector(x, name: str) -> np.ndarray:
    arr = np.array(x, dtype=float).reshape(-1)
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} has non-finite entries")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class Pencil:
    """A real 2 x m x n tensor stored as its two m x n slices."""

    A: np.ndarray
    B: np.ndarray

    def __post_init__(self):
        A = _as_matrix(self.A, "A")
        B = _as_matrix(self.B, "B")
        if A.shape != B.shape:
            raise ShapeError(f"slice shapes differ: {A.shape} vs {B.shape}")
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "B", B)

    @property
    def m(self) -> int:
        return self.A.shape[0]

    @property
    def n(self) -> int:
        return self.A.shape[1]

    @property
    def shape(self) -> tuple[int, int]:
        return self.A.shape

    @classmethod
    def zeros(cls, m: int, n: int) -> "Pencil":
        return cls(np.zeros((m, n)), np.zeros((m, n)))

    @classmethod
    def from_array(cls, X) -> "Pencil":
        """Build from a ``(2, m, n)`` array."""
        X = np.asarray(X, dtype=float)
        if X.ndim != 3 or X.shape[0] != 2:
            raise ShapeError(f"expected an array of shape (2, m, n), got {X.shape}")
        return cls(X[0], X[1])

    def to_array(self) -> np.ndarray:
        return np.stack([self.A, self.B])

    def transpose(self) -> "Pencil":
        """Swap the row and column modes."""
        return Pencil(self.A.T, self.B.T)

    def norm(self) -> float:
        return float(np.sqrt(np.sum(self.A**2) + np.sum(self.B**2)))

    def __repr__(self) -> str:
        return f"Pencil(m={self.m}, n={self.n})"


@dataclass(frozen=True, eq=False)
class RankOneTerm:
    """Tensor whose slice k equals ``alpha[k] * outer(u, v)``."""

    alpha: np.ndarray
    u: np.ndarray
    v: np.ndarray

    def __post_init__(self):
        alpha = _as_vector(self.alpha, "alpha")
        if alpha.shape != (2,):
            raise ShapeError(f"alpha must have length 2, got {alpha.shape[0]}")
        object.__setattr__(self, "alpha", alpha)
        object.__setattr__(self, "u", _as_vector(self.u, "u"))
        object.__setattr__(self, "v", _as_vector(self.v, "v"))

    def slices(self) -> np.ndarray:
        return self.alpha[:, None, None] * np.outer(self.u, self.v)[None]

    def swap_modes(self) -> "RankOneTerm":
        return RankOneTerm(self.alpha, self.v, self.u)

    def to_dict(self) -> dict:
        return {"alpha": self.alpha.tolist(), "u": self.u.tolist(), "v": self.v.tolist()}


@dataclass(eq=False)
class Decomposition:
    """Ordered list of rank-one terms claimed to sum to an m x n pencil.

    ``trace`` holds the dispatch trace of the routine that produced the terms:
    a list of dicts, each with at least ``branch``, ``shape`` and ``terms``.
    """

    m: int
    n: int
    terms: list[RankOneTerm] = field(default_factory=list)
    trace: list[dict] = field(default_factory=list)

    def __post_init__(self):
        self.terms = list(self.terms)
        for k, t in enumerate(self.terms):
            if t.u.shape[0] != self.m or t.v.shape[0] != self.n:
                raise ShapeError(
                    f"term {k} has u of length {t.u.shape[0]} and v of length "
                    f"{t.v.shape[0]}; expected {self.m} and {self.n}"
                )

    def __len__(self) -> int:
        return len(self.terms)

    def __iter__(self):
        return iter(self.terms)

    @property
    def n_terms(self) -> int:
        return len(self.terms)

    def factors(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Stack the terms into factor matrices of shapes (2, r), (m, r), (n, r)."""
        r = len(self.terms)
        W = np.zeros((2, r))
        U = np.zeros((self.m, r))
        V = np.zeros((self.n, r))
        for k, t in enumerate(self.terms):
            W[:, k], U[:, k], V[:, k] = t.alpha, t.u, t.v
        return W, U, V

    @classmethod
    def from_factors(cls, W, U, V, trace=None) -> "Decomposition":
        W, U, V = (np.asarray(x, dtype=float) for x in (W, U, V))
        terms = [RankOneTerm(W[:, k], U[:, k], V[:, k]) for k in range(W.shape[1])]
        return cls(U.shape[0], V.shape[0], terms, list(trace or []))

    def to_dict(self, include_trace: bool = False) -> dict:
        out: dict[str, Any] = {
            "m": self.m,
            "n": self.n,
            "terms": [t.to_dict() for t in self.terms],
        }
        if include_trace:
            out["trace"] = self.trace
        return out


@dataclass(frozen=True, eq=False)
class ModeTransform:
    """Invertible change of basis on the three modes of a pencil.

    The working tensor is obtained by (optionally) transposing the slices,
    mapping each slice X to ``L @ X @ R`` and then mixing the two slices with
    ``S``: new slice i is ``S[i, 0] * X0 + S[i, 1] * X1``.
    """

    S: np.ndarray
    L: np.ndarray
    R: np.ndarray
    transposed: bool = False

    def __post_init__(self):
        S = _as_matrix(self.S, "S")
        L = _as_matrix(self.L, "L")
        R = _as_matrix(self.R, "R")
        for name, X in (("S", S), ("L", L), ("R", R)):
            _check_invertible(X, name)
        if S.shape != (2, 2):
            raise ShapeError(f"S must be 2 x 2, got {S.shape}")
        object.__setattr__(self, "S", S)
        object.__setattr__(self, "L", L)
        object.__setattr__(self, "R", R)

    @classmethod
    def identity(cls, m: int, n: int) -> "ModeTransform":
        return cls(np.eye(2), np.eye(m), np.eye(n))

    @property
    def source_shape(self) -> tuple[int, int]:
        m, n = self.L.shape[0], self.R.shape[0]
        return (n, m) if self.transposed else (m, n)

    def inverse(self) -> "ModeTransform":
        if self.transposed:
            # (L X^T R)^{-1}-side: X = (L^{-1} Y R^{-1})^T = R^{-T} Y^T L^{-T}
            return ModeTransform(
                np.linalg.inv(self.S),
                np.linalg.inv(self.R).T,
                np.linalg.inv(self.L).T,
                True,
            )
        return ModeTransform(
            np.linalg.inv(self.S), np.linalg.inv(self.L), np.linalg.inv(self.R)
        )


def _check_invertible(X: np.ndarray, name: str) -> None:
    if X.shape[0] != X.shape[1]:
        raise ShapeError(f"{name} must be square, got {X.shape}")
    if X.shape[0] == 0:
        return
    if not np.isfinite(np.linalg.cond(X)) or np.linalg.cond(X) > TRANSFORM_COND_MAX:
        raise SingularTransformError(f"{name} is singular or too badly conditioned")


def pencil_element(T: Pencil, mu: float, lam: float) -> np.ndarray:
    """Return the pencil member ``mu * A + lam * B``."""
    return mu * T.A + lam * T.B


def reconstruct(D: Decomposition) -> Pencil:
    """Sum the terms of a decomposition into a pencil."""
    W, U, V = D.factors()
    X = np.einsum("kr,ir,jr->kij", W, U, V)
    return Pencil(X[0], X[1])


def residual(T: Pencil, D: Decomposition) -> float:
    """Relative Frobenius residual ``||T - reconstruct(D)|| / ||T||``."""
    if (T.m, T.n) != (D.m, D.n):
        raise ShapeError(f"pencil is {T.m}x{T.n}, decomposition is {D.m}x{D.n}")
    diff = T.to_array() - reconstruct(D).to_array()
    return float(np.linalg.norm(diff) / max(T.norm(), EPS_FLOOR))


def apply_transform(T: Pencil, M: ModeTransform) -> Pencil:
    """Return the pencil ``M`` maps ``T`` to."""
    if M.source_shape != T.shape:
        raise ShapeError(f"transform expects a {M.source_shape} pencil, got {T.shape}")
    A, B = (T.A.T, T.B.T) if M.transposed else (T.A, T.B)
    A1, B1 = M.L @ A @ M.R, M.L @ B @ M.R
    S = M.S
    return Pencil(S[0, 0] * A1 + S[0, 1] * B1, S[1, 0] * A1 + S[1, 1] * B1)


def pull_back(D: Decomposition, M: ModeTransform) -> Decomposition:
    """Map a decomposition of ``apply_transform(T, M)`` to one of ``T``.

    Each term keeps its identity: ``alpha -> S^{-1} alpha``, ``u -> L^{-1} u``
    and ``v -> R^{-T} v``, followed by a mode swap when ``M`` transposes.
    """
    m, n = M.L.shape[0], M.R.shape[0]
    if (D.m, D.n) != (m, n):
        raise ShapeError(f"transform produces {m}x{n} pencils, decomposition is {D.m}x{D.n}")
    W, U, V = D.factors()
    W = np.linalg.solve(M.S, W)
    U = np.linalg.solve(M.L, U) if m else U
    V = np.linalg.solve(M.R.T, V) if n else V
    if M.transposed:
        U, V = V, U
    return Decomposition.from_factors(W, U, V, trace=D.trace)


def numerical_rank(X: np.ndarray, tol: float = RANK_TOL) -> int:
    if X.size == 0:
        return 0
    s = np.linalg.svd(X, compute_uv=False)
    if s[0] == 0.0:
        return 0
    return int(np.sum(s > tol * s[0]))


def unfolding_ranks(T: Pencil, tol: float = RANK_TOL) -> tuple[int, int, int]:
    """Numerical ranks of the slice, row and column unfoldings.

    Each one is a lower bound on the CP rank of ``T``.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    X = T.to_array()
    m, n = T.m, T.n
    r1 = numerical_rank(X.reshape(2, m * n), tol)
    r2 = numerical_rank(np.concatenate([T.A, T.B], axis=1), tol)
    r3 = numerical_rank(np.concatenate([T.A.T, T.B.T], axis=1), tol)
    return r1, r2, r3


@dataclass(frozen=True)
class RankBound:
    """Maximal CP rank over all real 2 x m x n tensors."""

    m: int
    n: int
    bound: int

    def __int__(self) -> int:
        return self.bound


def _bound(m: int, n: int) -> int:
    if m > n:
        m, n = n, m
    if m == 0:
        return 0
    if n >= 2 * m:
        return 2 * m
    return m + n // 2


def max_rank_bound(m: int, n: int) -> RankBound:
    """Return ``r(2, m, n)``: ``m + n // 2`` for ``m <= n <= 2m`` and ``2m`` beyond.

    The shape is canonicalized to ``m <= n`` first.
    """
    if int(m) != m or int(n) != n or m < 1 or n < 1:
        raise ValueError(f"dimensions must be positive integers, got ({m}, {n})")
    return RankBound(int(m), int(n), _bound(int(m), int(n)))


# --------------------------------------------------------------------- JSON I/O


def pencil_to_dict(T: Pencil) -> dict:
    return {"m": T.m, "n": T.n, "A": T.A.tolist(), "B": T.B.tolist()}


def _require(doc: dict, key: str):
    if key not in doc:
        raise FormatError(f"missing field {key!r}")
    return doc[key]


def _int_field(doc: dict, key: str) -> int:
    val = _require(doc, key)
    if isinstance(val, bool) or not isinstance(val, int) or val < 0:
        raise FormatError(f"field {key!r} must be a nonnegative integer")
    return val


def _matrix_field(doc: dict, key: str, m: int, n: int) -> np.ndarray:
    rows = _require(doc, key)
    try:
        arr = np.array(rows, dtype=float)
    except (TypeError, ValueError) as exc:
        raise FormatError(f"field {key!r} is not a numeric matrix") from exc
    if m * n == 0 and arr.size == 0:
        return np.zeros((m, n))
    if arr.shape != (m, n):
        raise FormatError(f"field {key!r} has shape {arr.shape}, expected {(m, n)}")
    if not np.all(np.isfinite(arr)):
        raise FormatError(f"field {key!r} has non-finite entries")
    return arr


def pencil_from_dict(doc: Any) -> Pencil:
    if not isinstance(doc, dict):
        raise FormatError("pencil document must be a JSON object")
    m, n = _int_field(doc, "m"), _int_field(doc, "n")
    return Pencil(_matrix_field(doc, "A", m, n), _matrix_field(doc, "B", m, n))


def decomposition_from_dict(doc: Any) -> Decomposition:
    if not isinstance(doc, dict):
        raise FormatError("decomposition document must be a JSON object")
    m, n = _int_field(doc, "m"), _int_field(doc, "n")
    raw = _require(doc, "terms")
    if not isinstance(raw, list):
        raise FormatError("field 'terms' must be a list")
    terms = []
    for k, item in enumerate(raw):
        if not isinstance(item, dict):
            raise FormatError(f"term {k} must be a JSON object")
        try:
            alpha = np.array(_require(item, "alpha"), dtype=float)
            u = np.array(_require(item, "u"), dtype=float)
            v = np.array(_require(item, "v"), dtype=float)
        except (TypeError, ValueError) as exc:
            raise FormatError(f"term {k} has non-numeric entries") from exc
        if alpha.shape != (2,) or u.shape != (m,) or v.shape != (n,):
            raise FormatError(f"term {k} has wrong vector lengths")
        try:
            terms.append(RankOneTerm(alpha, u, v))
        except ValueError as exc:
            raise FormatError(f"term {k}: {exc}") from exc
    return Decomposition(m, n, terms, list(doc.get("trace", [])))


def _encode(obj: Any) -> str:
    if isinstance(obj, dict):
        items = sorted(obj.items())
        return "{" + ", ".join(f"{json.dumps(str(k))}: {_encode(v)}" for k, v in items) + "}"
    if isinstance(obj, (list, tuple)):
        return "[" + ", ".join(_encode(v) for v in obj) + "]"
    if isinstance(obj, np.ndarray):
        return _encode(obj.tolist())
    if isinstance(obj, (bool, np.bool_)) or obj is None:
        return json.dumps(bool(obj) if obj is not None else None)
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        if not np.isfinite(x):
            return json.dumps(None)
        text = format(x, ".17g")
        if all(c in "-0123456789" for c in text):
            text += ".0"
        return text
    return json.dumps(obj)


def dumps_canonical(obj: Any) -> str:
    """Serialize to JSON with sorted keys and 17 significant digits per float."""
    return _encode(obj) + "\n"


def load_json(path) -> Any:
    try:
        with open(path, encoding="utf-8") as fh:
            return json.load(fh)
    except json.JSONDecodeError as exc:
        raise FormatError(f"{path}: invalid JSON ({exc.msg})") from exc


def load_pencil(path) -> Pencil:
    return pencil_from_dict(load_json(path))


def load_decomposition(path) -> Decomposition:
    return decomposition_from_dict(load_json(path))


def save_json(obj: Any, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(dumps_canonical(obj))


def stack_terms(parts: Iterable[Sequence[RankOneTerm]]) -> list[RankOneTerm]:
    out: list[RankOneTerm] = []
    for p in parts:
        out.extend(p)
    return out
