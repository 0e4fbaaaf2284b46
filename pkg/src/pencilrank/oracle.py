"""Independent numerical checks: CP-ALS rank search and test-pencil generators.

A failed ALS search is evidence that no decomposition with that many terms
exists, never a certificate.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
import scipy.linalg

from .core import RANK_TOL, Decomposition, Pencil, unfolding_ranks


@dataclass(frozen=True)
class AlsConfig:
    max_rank: int = 16
    restarts: int = 50
    max_iters: int = 500
    convergence_tol: float = 1e-10
    success_tol: float = 1e-6
    seed: int = 0

    def __post_init__(self):
        for name in ("max_rank", "restarts", "max_iters"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be positive")
        if not 0 < self.convergence_tol < self.success_tol:
            raise ValueError("need 0 < convergence_tol < success_tol")


@dataclass(eq=False)
class AlsResult:
    """Outcome of :func:`als_search`.

    ``decomposition`` is ``None`` when no restart reached ``success_tol``;
    ``best_residual`` is reported either way.
    """

    rank: int
    decomposition: Optional[Decomposition]
    best_residual: float
    best_restart: int
    iterations: int
    history: list[float] = field(default_factory=list)

    @property
    def found(self) -> bool:
        return self.decomposition is not None


@dataclass
class RankEstimate:
    lower: int
    upper: int
    reducer_terms: int
    residuals: dict[int, float] = field(default_factory=dict)


def _khatri_rao(X: np.ndarray, Y: np.ndarray) -> np.ndarray:
    return (X[:, None, :] * Y[None, :, :]).reshape(-1, X.shape[1])


def _rel_residual(X: np.ndarray, W, U, V, norm: float) -> float:
    return float(np.linalg.norm(X - np.einsum("kr,ir,jr->kij", W, U, V)) / norm)


def _balance(W, U, V):
    nw, nu, nv = (np.linalg.norm(F, axis=0) for F in (W, U, V))
    prod = nw * nu * nv
    ok = prod > 0
    g = np.cbrt(prod[ok])
    W[:, ok] *= g / nw[ok]
    U[:, ok] *= g / nu[ok]
    V[:, ok] *= g / nv[ok]


def _lsq(K: np.ndarray, Y: np.ndarray) -> np.ndarray:
    # min ||K F^T - Y^T||: pseudoinverse solve with the global rank tolerance
    return np.linalg.lstsq(K, Y.T, rcond=RANK_TOL)[0].T


def als_run(T: Pencil, W, U, V, cfg: AlsConfig):
    """Run ALS sweeps from the given factors.

    Returns ``(W, U, V, history)``.  ``history[k]`` is the relative residual
    after ``k`` accepted sweeps; a sweep that would increase the residual is
    rejected and ends the run, so the history is nonincreasing.
    """
    X = T.to_array()
    m, n = T.m, T.n
    norm = max(T.norm(), 1e-300)
    X1 = X.reshape(2, m * n)
    X2 = X.transpose(1, 0, 2).reshape(m, 2 * n)
    X3 = X.transpose(2, 0, 1).reshape(n, 2 * m)
    W, U, V = (np.array(F, dtype=float) for F in (W, U, V))
    res = _rel_residual(X, W, U, V, norm)
    history = [res]
    for _ in range(cfg.max_iters):
        if res <= cfg.success_tol and len(history) > 1:
            break
        W1 = _lsq(_khatri_rao(U, V), X1)
        U1 = _lsq(_khatri_rao(W1, V), X2)
        V1 = _lsq(_khatri_rao(W1, U1), X3)
        _balance(W1, U1, V1)
        new = _rel_residual(X, W1, U1, V1, norm)
        if new > res:
            break
        W, U, V = W1, U1, V1
        history.append(new)
        done = res - new < cfg.convergence_tol
        res = new
        if done:
            break
    return W, U, V, history


def als_search(
    T: Pencil, r: int, cfg: AlsConfig | None = None, init: Decomposition | None = None
) -> AlsResult:
    """Look for an ``r``-term decomposition of ``T`` by CP-ALS.

    With ``init`` a single warm-started run is made (padded with zero terms
    up to ``r``); otherwise ``cfg.restarts`` seeded random starts are tried
    and the best residual wins, ties going to the earliest restart.
    """
    cfg = cfg or AlsConfig()
    if r < 0:
        raise ValueError("r must be nonnegative")
    m, n = T.m, T.n
    if r == 0:
        res = 0.0 if T.norm() == 0 else 1.0
        D = Decomposition(m, n, []) if res <= cfg.success_tol else None
        return AlsResult(0, D, res, 0, 0, [res])

    starts = []
    if init is not None:
        W0, U0, V0 = init.factors()
        if W0.shape[1] > r:
            raise ValueError(f"warm start has {W0.shape[1]} terms, more than r = {r}")
        pad = r - W0.shape[1]
        starts.append((
            np.hstack([W0, np.zeros((2, pad))]),
            np.hstack([U0, np.zeros((m, pad))]),
            np.hstack([V0, np.zeros((n, pad))]),
        ))
    else:
        scale = np.cbrt(max(T.norm(), 1e-300) / np.sqrt(r))
        for child in np.random.SeedSequence(cfg.seed).spawn(cfg.restarts):
            rng = np.random.default_rng(child)
            starts.append(tuple(scale * rng.standard_normal((k, r)) for k in (2, m, n)))

    best = None
    for idx, (W, U, V) in enumerate(starts):
        W, U, V, hist = als_run(T, W, U, V, cfg)
        if best is None or hist[-1] < best[0]:
            best = (hist[-1], idx, W, U, V, hist)
    res, idx, W, U, V, hist = best
    D = Decomposition.from_factors(W, U, V) if res <= cfg.success_tol else None
    return AlsResult(r, D, float(res), idx, len(hist) - 1, hist)


def min_rank_estimate(T: Pencil, cfg: AlsConfig | None = None, tol: float = RANK_TOL) -> RankEstimate:
    """Bracket the rank of ``T``.

    ``lower`` is the largest unfolding rank.  ``upper`` is the smallest ``r``
    at which ALS succeeds, searching up from ``lower`` below the term count of
    :func:`pencilrank.reducer.decompose`, which is used when every search fails.
    """
    from .reducer import decompose

    cfg = cfg or AlsConfig()
    lower = max(unfolding_ranks(T, tol))
    if cfg.max_rank < lower:
        raise ValueError(f"max_rank {cfg.max_rank} is below the unfolding rank {lower}")
    reducer_terms = len(decompose(T, tol=tol, seed=cfg.seed))
    upper = reducer_terms
    residuals = {}
    for r in range(lower, min(cfg.max_rank, reducer_terms - 1) + 1):
        result = als_search(T, r, cfg)
        residuals[r] = result.best_residual
        if result.found:
            upper = r
            break
    return RankEstimate(lower, upper, reducer_terms, residuals)


# ----------------------------------------------------------------- generators


def gen_random(m: int, n: int, seed: int = 0) -> Pencil:
    """Pencil with independent standard normal entries."""
    if m < 1 or n < 1:
        raise ValueError(f"invalid shape ({m}, {n})")
    rng = np.random.default_rng(seed)
    return Pencil(rng.standard_normal((m, n)), rng.standard_normal((m, n)))


def gen_rotation_pencil(n: int, angles: Sequence[float]) -> Pencil:
    """``(I_n; diag(R(angles[0]), R(angles[1]), ...))`` with 2 x 2 rotation blocks."""
    angles = [float(t) for t in angles]
    if n < 2 or n % 2 or len(angles) != n // 2:
        raise ValueError("n must be even and positive with n // 2 angles")
    if not all(0 < t < np.pi for t in angles):
        raise ValueError("angles must lie in (0, pi)")
    blocks = [np.array([[np.cos(t), -np.sin(t)], [np.sin(t), np.cos(t)]]) for t in angles]
    return Pencil(np.eye(n), scipy.linalg.block_diag(*blocks))


def gen_rank_deficient(n: int, rank: int, seed: int = 0) -> Pencil:
    """Square pencil whose slices are independent products of ``n x rank`` and ``rank x n`` factors."""
    if n < 1 or not 0 <= rank <= n:
        raise ValueError(f"need n >= 1 and 0 <= rank <= n, got ({n}, {rank})")
    rng = np.random.default_rng(seed)
    A = rng.standard_normal((n, rank)) @ rng.standard_normal((rank, n))
    B = rng.standard_normal((n, rank)) @ rng.standard_normal((rank, n))
    return Pencil(A, B)
