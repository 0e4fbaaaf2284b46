"""Decomposition of square pencils that contain a nonsingular member.

The pencil is brought to the form ``(F; I)``, ``F`` is factored as a product
of a symmetric matrix and the inverse of a symmetric invertible matrix, which
turns the pencil into a symmetric pair ``(P; Q)``.  After an orthogonal
diagonalization of ``Q`` at most ``n // 2`` of its eigenvalues are reflected
to make it positive definite, and the pair is then diagonalized by a single
congruence.  This yields at most ``n + n // 2`` rank-one terms.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .core import (
    RANK_TOL,
    Decomposition,
    ModeTransform,
    Pencil,
    PencilError,
    RankOneTerm,
    ShapeError,
    pull_back,
)

#: Number of random combinations of the nullspace basis tried for ``X``.
BOSCH_SAMPLES = 64
#: Largest accepted condition number of the symmetric factor.
BOSCH_COND_MAX = 1e10
#: Relative singular value threshold for the nullspace of the symmetry map.
NULLSPACE_TOL = 1e-10
#: Number of random directions scanned for a nonsingular pencil member.
ELEMENT_DIRECTIONS = 32
#: A positive definite solution closer to ``I`` is preferred up to this condition number.
DEFINITE_COND_MAX = 1e6


class SymmetricFactorError(PencilError):
    """No well-conditioned symmetric solution of ``X F^T = F X`` was found."""

    def __init__(self, message: str, best_cond: float = float("inf"), attempts: int = 0):
        super().__init__(message)
        self.best_cond = best_cond
        self.attempts = attempts


class SingularElementError(PencilError, ValueError):
    """The chosen pencil member is (numerically) singular."""


class NotPositiveDefiniteError(PencilError, ValueError):
    """A matrix required to be positive definite is not."""


@dataclass(eq=False)
class SymmetricPair:
    """Symmetric pair ``(P; Q)`` with ``apply_transform(T, provenance) == (P; Q)``."""

    P: np.ndarray
    Q: np.ndarray
    provenance: ModeTransform
    info: dict = field(default_factory=dict)


@dataclass(eq=False)
class CongruenceResult:
    """Simultaneous diagonalization of a symmetric pair after the sign fix.

    ``W.T @ Q_corrected @ W = I`` and ``W.T @ (sign * P) @ W = diag(d1)``,
    where ``Q_corrected = sign * Q`` plus the reflected eigen-directions.
    ``corrections`` are the terms that restore the original ``Q``.
    """

    W: np.ndarray
    d1: np.ndarray
    sign: int
    Q_corrected: np.ndarray
    corrections: list[RankOneTerm]


def _symmetric_basis(n: int) -> list[np.ndarray]:
    basis = []
    for i in range(n):
        for j in range(i, n):
            E = np.zeros((n, n))
            if i == j:
                E[i, i] = 1.0
            else:
                E[i, j] = E[j, i] = 1.0 / np.sqrt(2.0)
            basis.append(E)
    return basis


def symmetry_nullspace(F: np.ndarray) -> list[np.ndarray]:
    """Basis of symmetric ``X`` with ``X F^T = F X`` (numerical nullspace)."""
    n = F.shape[0]
    basis = _symmetric_basis(n)
    iu = np.triu_indices(n, k=1)
    # X F^T - F X is antisymmetric for symmetric X: only the strict upper part counts.
    K = np.array([(E @ F.T - F @ E)[iu] for E in basis]).T
    if K.size == 0:
        return basis
    _, s, Vt = np.linalg.svd(K, full_matrices=True)
    smax = s[0] if s.size else 0.0
    rank = int(np.sum(s > NULLSPACE_TOL * smax)) if smax > 0 else 0
    coeffs = Vt[rank:]
    return [np.tensordot(c, np.array(basis), axes=1) for c in coeffs]


def solve_symmetry_equation(
    F, samples: int = BOSCH_SAMPLES, seed: int = 0
) -> np.ndarray:
    """Find a symmetric invertible ``X`` with ``X @ F.T == F @ X``.

    The projection of the identity onto the solution space is used when it is
    positive definite and well conditioned; otherwise random combinations of a
    nullspace basis are drawn and the best-conditioned one is kept.  ``X`` is returned with unit Frobenius norm.
    """
    F = np.asarray(F, dtype=float)
    if F.ndim != 2 or F.shape[0] != F.shape[1]:
        raise ShapeError(f"F must be square, got {F.shape}")
    n = F.shape[0]
    scale = np.linalg.norm(F)
    Fs = F / scale if scale > 0 else F
    null = symmetry_nullspace(Fs)
    if not null:
        raise SymmetricFactorError("symmetry equation has an empty nullspace", attempts=0)
    stack = np.array(null)
    # the projection of I onto the solution space: definite X needs no corrections later
    flat = stack.reshape(len(null), -1)
    X0 = np.tensordot(np.linalg.lstsq(flat.T, np.eye(n).ravel(), rcond=None)[0], stack, axes=1)
    if n and np.linalg.norm(X0) > 0:
        ev = np.linalg.eigvalsh(0.5 * (X0 + X0.T))
        if ev[0] > 0 and ev[-1] <= DEFINITE_COND_MAX * ev[0]:
            return _finish(X0, Fs, ev[-1] / ev[0], samples)
    rng = np.random.default_rng(seed)
    best, best_cond = None, np.inf
    for _ in range(samples):
        X = np.tensordot(rng.standard_normal(len(null)), stack, axes=1)
        c = np.linalg.cond(X)
        if c < best_cond:
            best, best_cond = X, c
    if best is None or not best_cond <= BOSCH_COND_MAX:
        raise SymmetricFactorError(
            f"no sampled symmetric solution has condition number <= {BOSCH_COND_MAX:g}"
            f" (best {best_cond:.3g})",
            best_cond=float(best_cond),
            attempts=samples,
        )
    return _finish(best, Fs, best_cond, samples)


def _finish(X, Fs, cond, samples):
    X = X / np.linalg.norm(X)
    res = np.linalg.norm(X @ Fs.T - Fs @ X)
    if X.size and res > 1e-9 * max(np.linalg.norm(Fs), 1.0):
        raise SymmetricFactorError(f"symmetry equation residual {res:.3g} too large", float(cond), samples)
    return X


def bosch_factor(F, samples: int = BOSCH_SAMPLES, seed: int = 0):
    """Factor a square matrix as ``F = Asym @ inv(Bsym)`` with both factors symmetric.

    Returns
    -------
    Asym, Bsym : ndarray
        ``Bsym`` is invertible; ``Asym = F @ Bsym``.
    """
    F = np.asarray(F, dtype=float)
    X = solve_symmetry_equation(F, samples=samples, seed=seed)
    P = F @ X
    P = 0.5 * (P + P.T)
    return P, X


def orthogonal_diag(Q):
    """Eigendecomposition ``Q = U diag(d) U^T`` with ``d`` sorted descending."""
    Q = np.asarray(Q, dtype=float)
    if Q.ndim != 2 or Q.shape[0] != Q.shape[1]:
        raise ShapeError(f"Q must be square, got {Q.shape}")
    if np.linalg.norm(Q - Q.T) > 1e-8 * max(np.linalg.norm(Q), 1e-300):
        raise ValueError("Q is not symmetric")
    d, U = np.linalg.eigh(0.5 * (Q + Q.T))
    order = np.argsort(-d, kind="stable")
    return U[:, order], d[order]


def positive_correction(d, tol: float = RANK_TOL):
    """Choose a global sign and the entries to reflect so all become positive.

    Returns ``(sign, corrections)`` where ``corrections`` lists ``(index, amount)``
    pairs (0-based indices) with ``amount = 2 * |d[index]|``; at most
    ``len(d) // 2`` entries are reflected.
    """
    d = np.asarray(d, dtype=float).reshape(-1)
    if d.size == 0:
        return 1, []
    scale = np.max(np.abs(d))
    if scale == 0 or np.any(np.abs(d) <= tol * scale):
        raise SingularElementError("a diagonal entry is zero; the pencil member is singular")
    n_pos = int(np.sum(d > 0))
    n_neg = d.size - n_pos
    if n_pos != n_neg:
        sign = 1 if n_pos > n_neg else -1
    else:
        sign = 1 if d[np.argmax(np.abs(d))] > 0 else -1
    corrections = [(int(i), 2.0 * abs(float(d[i]))) for i in np.flatnonzero(sign * d < 0)]
    return sign, corrections


def simultaneous_congruence_diag(P, Qpd):
    """Find ``W`` with ``W^T Qpd W = I`` and ``W^T P W = diag(d1)``."""
    P = np.asarray(P, dtype=float)
    Qpd = np.asarray(Qpd, dtype=float)
    Qs = 0.5 * (Qpd + Qpd.T)
    ev = np.linalg.eigvalsh(Qs)
    if ev.size and not ev[0] > RANK_TOL * max(abs(ev[-1]), 1e-300):
        raise NotPositiveDefiniteError(f"smallest eigenvalue {ev[0]:.3g} is not positive")
    C = np.linalg.cholesky(Qs)
    M = scipy.linalg.solve_triangular(C, 0.5 * (P + P.T), lower=True)
    M = scipy.linalg.solve_triangular(C, M.T, lower=True)
    d1, V = np.linalg.eigh(0.5 * (M + M.T))
    W = scipy.linalg.solve_triangular(C.T, V, lower=False)
    return W, d1


def select_element(T: Pencil, directions: int = ELEMENT_DIRECTIONS, seed: int = 0):
    """Pick the unit direction ``(mu, lam)`` whose member has the largest smallest singular value.

    Returns ``(mu, lam, smin, smax)``.
    """
    angles = np.concatenate([[0.0, np.pi / 2], np.random.default_rng(seed).uniform(0, np.pi, directions)])
    best = None
    for t in angles:
        mu, lam = np.cos(t), np.sin(t)
        s = np.linalg.svd(mu * T.A + lam * T.B, compute_uv=False)
        if best is None or s[-1] > best[2]:
            best = (float(mu), float(lam), float(s[-1]), float(s[0]))
    return best


def symmetrize_pencil(T: Pencil, element, seed: int = 0) -> SymmetricPair:
    """Transform a square pencil with nonsingular member ``mu A + lam B`` into ``(P; Q)``."""
    if T.m != T.n:
        raise ShapeError(f"pencil must be square, got {T.shape}")
    mu, lam = (float(x) for x in element)
    r = np.hypot(mu, lam)
    if r == 0:
        raise SingularElementError("element direction is zero")
    mu, lam = mu / r, lam / r
    S = np.array([[-lam, mu], [mu, lam]])
    A1 = -lam * T.A + mu * T.B
    N = mu * T.A + lam * T.B
    s = np.linalg.svd(N, compute_uv=False)
    if not s[-1] > RANK_TOL * s[0]:
        raise SingularElementError(f"pencil member ({mu:.3g}, {lam:.3g}) is singular")
    F = np.linalg.solve(N.T, A1.T).T
    Psym, X = bosch_factor(F, seed=seed)
    FX = F @ X
    R = np.linalg.solve(N, X)
    P_raw = A1 @ R
    P = 0.5 * (P_raw + P_raw.T)
    info = {
        "element": [mu, lam],
        "element_cond": float(s[0] / s[-1]),
        "bosch_cond": float(np.linalg.cond(X)),
        # measured on F X before it is symmetrized
        "bosch_symmetry_residual": [
            float(np.linalg.norm(FX - FX.T) / max(np.linalg.norm(FX), 1e-300)),
            float(np.linalg.norm(X - X.T) / np.linalg.norm(X)),
        ],
        "bosch_factor_residual": float(
            np.linalg.norm(np.linalg.solve(X.T, Psym.T).T - F) / max(np.linalg.norm(F), 1e-300)
        ),
        "pair_asymmetry": float(np.linalg.norm(P_raw - P_raw.T) / max(np.linalg.norm(P_raw), 1e-300)),
    }
    return SymmetricPair(P, X, ModeTransform(S, np.eye(T.n), R), info)


def congruence_reduce(pair: SymmetricPair) -> CongruenceResult:
    """Reflect at most ``n // 2`` eigenvalues of ``Q`` and diagonalize the pair."""
    U, lam = orthogonal_diag(pair.Q)
    sign, corr = positive_correction(lam)
    Qc = (U * np.abs(lam)) @ U.T
    W, d1 = simultaneous_congruence_diag(sign * pair.P, Qc)
    corrections = [
        RankOneTerm([0.0, -sign * amount], U[:, i], U[:, i]) for i, amount in corr
    ]
    return CongruenceResult(W, d1, sign, Qc, corrections)


def decompose_nonsingular(T: Pencil, element=None, seed: int = 0) -> Decomposition:
    """Decompose a square pencil with a nonsingular member into at most ``n + n // 2`` terms.

    ``element`` is the direction ``(mu, lam)`` of the nonsingular member; when
    omitted the best-conditioned of a seeded scan is used.
    """
    if T.m != T.n:
        raise ShapeError(f"pencil must be square, got {T.shape}")
    n = T.n
    if element is None:
        mu, lam, _, _ = select_element(T, seed=seed)
        element = (mu, lam)
    pair = symmetrize_pencil(T, element, seed=seed)
    cr = congruence_reduce(pair)
    G = np.linalg.inv(cr.W).T
    s = cr.sign
    terms = [RankOneTerm([s * cr.d1[i], s], G[:, i], G[:, i]) for i in range(n)]
    terms.extend(cr.corrections)
    entry = {
        "branch": "symmetrize",
        "shape": [n, n],
        "terms": len(terms),
        "corrections": len(cr.corrections),
        "sign": s,
        **pair.info,
    }
    D = pull_back(Decomposition(n, n, terms), pair.provenance)
    D.trace = [entry]
    return D
