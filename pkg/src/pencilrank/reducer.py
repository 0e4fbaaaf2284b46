"""Full decomposition of a 2 x m x n pencil within the maximal-rank bound.

The dispatcher works on the canonical orientation ``m <= n`` and recurses on
strictly smaller pencils:

* pencils whose unfoldings are rank deficient are compressed first;
* ``m <= 2`` uses the closed forms in :mod:`pencilrank.small`;
* ``n >= 2m`` splits the two slices (``2m`` terms);
* square pencils with a nonsingular slice go through
  :func:`pencilrank.symmetrize.decompose_nonsingular`; singular ones peel a
  bordering row (or two zero rows) and recurse on a ``(n-1) x n`` (or
  ``(n-2) x n``) pencil;
* ``m < n < 2m`` brings the pencil to a column staircase, peels ``2d``
  rank-one columns against a common complement ``Z`` and recurses on the
  ``dim(Z) x (n - 2d)`` core.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import small
from ._frame import complement, orth, unit
from .core import (
    RANK_TOL,
    Decomposition,
    ModeTransform,
    Pencil,
    PencilError,
    RankOneTerm,
    _bound,
    apply_transform,
    pull_back,
)
from .symmetrize import decompose_nonsingular, select_element

#: Attempts made by :func:`common_complement` before giving up.
COMPLEMENT_ATTEMPTS = 64
#: Smallest accepted singular value of the orthonormal bases ``[V Z]`` and ``[W Z]``.
COMPLEMENT_MIN_SCORE = 1e-6
#: Borderline factor: singular values within this factor of the threshold count as zero.
BORDERLINE = 10.0


class DecompositionError(PencilError):
    """Decomposition failed; ``trace`` holds the dispatch steps taken so far."""

    def __init__(self, message: str, trace=None):
        super().__init__(message)
        self.trace = list(trace or [])


class RankAssumptionError(PencilError, ValueError):
    """The pencil does not satisfy the rank assumptions of a reduction step."""


class ComplementError(PencilError):
    """No common complement passing both direct-sum tests was found."""


@dataclass(eq=False)
class ReductionPlan:
    """Column staircase data and the common complement used for peeling."""

    s: int
    t: int
    u: int
    d: int
    Zbasis: np.ndarray
    ambient_dim: int
    info: dict = field(default_factory=dict)


def _scale(T: Pencil) -> float:
    if T.m == 0 or T.n == 0:
        return 0.0
    return max(np.linalg.norm(T.A, 2), np.linalg.norm(T.B, 2))


def _rank(s: np.ndarray, ref: float, tol: float) -> int:
    if ref == 0:
        return 0
    return int(np.sum(s > tol * ref))


# ------------------------------------------------------------------ staircase


def column_normal_form(T: Pencil, tol: float = RANK_TOL):
    """Bring ``T`` to a column staircase by column operations.

    Returns ``(M, T1, s, t, u)`` with ``T1 = apply_transform(T, M)`` such that

    * columns ``0..s-1`` have independent slice-1 parts ``a_j``;
    * columns ``s..s+t-1`` have zero slice-1 part and independent slice-2 parts;
    * columns from ``s+t`` on are zero;
    * columns ``0..u-1`` have zero slice-2 part, and the slice-2 parts of
      columns ``u..s+t-1`` are independent.
    """
    m, n = T.shape
    scale = _scale(T)
    A, B = np.array(T.A), np.array(T.B)
    if scale == 0:
        return ModeTransform.identity(m, n), T, 0, 0, 0

    _, sa, Vta = np.linalg.svd(A)
    s = _rank(sa, scale, tol)
    R = Vta.T.copy()
    A, B = A @ R, B @ R

    _, sb, Vtb = np.linalg.svd(B[:, s:])
    t = _rank(sb, scale, tol) if n > s else 0
    R2 = np.eye(n)
    R2[s:, s:] = Vtb.T
    R = R @ R2
    A, B = A @ R2, B @ R2

    # remove from b_1..b_s their components along b_{s+1}..b_{s+t}
    R3 = np.eye(n)
    if t and s:
        C = np.linalg.lstsq(B[:, s:s + t], B[:, :s], rcond=None)[0]
        R3[s:s + t, :s] = -C
    R = R @ R3
    A, B = A @ R3, B @ R3

    # order columns 0..s-1 so that those with vanishing slice-2 part come first
    u = s
    if s:
        _, s3, Vt3 = np.linalg.svd(B[:, :s])
        r3 = _rank(s3, scale, tol)
        u = s - r3
        R4 = np.eye(n)
        R4[:s, :s] = Vt3.T[:, ::-1]
        R = R @ R4

    M = ModeTransform(np.eye(2), np.eye(m), R)
    T1 = apply_transform(T, M)
    A1, B1 = np.array(T1.A), np.array(T1.B)
    A1[:, s:] = 0.0
    B1[:, :u] = 0.0
    B1[:, s + t:] = 0.0
    return M, Pencil(A1, B1), s, t, u


def split_disjoint(T1: Pencil, plan: ReductionPlan):
    """Column-by-column decomposition when the slice-2 parts of the first block vanish.

    Returns ``None`` unless ``plan.u == plan.s``; otherwise every nonzero
    column is a rank-one term, at most ``n`` of them.
    """
    if plan.u != plan.s:
        return None
    n = T1.n
    terms = [RankOneTerm([1.0, 0.0], T1.A[:, j], unit(n, j)) for j in range(plan.s)]
    terms += [
        RankOneTerm([0.0, 1.0], T1.B[:, j], unit(n, j))
        for j in range(plan.s, plan.s + plan.t)
    ]
    return Decomposition(T1.m, n, terms)


def _direct_sum_score(Qx: np.ndarray, Z: np.ndarray) -> float:
    M = np.hstack([Qx, Z])
    if M.shape[1] == 0:
        return 1.0
    return float(np.linalg.svd(M, compute_uv=False)[-1])


def common_complement(Vbasis, Wbasis, ambient_basis, seed: int = 0, tol: float = RANK_TOL):
    """Orthonormal basis of ``Z`` with ``V + Z = W + Z = ambient`` (direct sums).

    The first candidate is the orthogonal complement, inside the ambient
    space, of the bisectors of the principal vector pairs of ``V`` and ``W``;
    seeded random complements are tried only if that candidate fails the
    rank tests.
    """
    Vbasis, Wbasis, ambient_basis = (np.asarray(x, dtype=float) for x in (Vbasis, Wbasis, ambient_basis))
    Qa = orth(ambient_basis, tol)
    Qv = orth(Vbasis, tol)
    Qw = orth(Wbasis, tol)
    if Qv.shape[1] != Qw.shape[1]:
        raise ComplementError(f"dim V = {Qv.shape[1]} differs from dim W = {Qw.shape[1]}")
    d, k = Qv.shape[1], Qa.shape[1]
    for Q, name in ((Qv, "V"), (Qw, "W")):
        if np.linalg.norm(Q - Qa @ (Qa.T @ Q)) > 1e-6:
            raise ComplementError(f"{name} is not contained in the ambient space")
    if d == 0:
        return Qa

    Cv, Cw = Qa.T @ Qv, Qa.T @ Qw
    Y, _, Zt = np.linalg.svd(Cv.T @ Cw)
    bisectors = Cv @ Y + Cw @ Zt.T
    Zc = complement(orth(bisectors, tol))
    candidates = [Zc[:, : k - d]]
    rng = np.random.default_rng(seed)
    best, best_score = None, -1.0
    for attempt in range(COMPLEMENT_ATTEMPTS):
        if attempt < len(candidates):
            Zloc = candidates[attempt]
        else:
            Zloc = np.linalg.qr(rng.standard_normal((k, k - d)))[0]
        Z = Qa @ Zloc
        score = min(_direct_sum_score(Qv, Z), _direct_sum_score(Qw, Z))
        if score > best_score:
            best, best_score = Z, score
        if best_score >= 0.5:
            break
    if best_score < COMPLEMENT_MIN_SCORE:
        raise ComplementError(f"no common complement found (best score {best_score:.3g})")
    return best


def plan_reduction(T1: Pencil, s: int, t: int, u: int, seed: int = 0, tol: float = RANK_TOL) -> ReductionPlan:
    """Compute ``d``, the ambient space and the common complement ``Z`` for a staircase pencil."""
    n = T1.n
    ambient = np.hstack([T1.A[:, :s], T1.B[:, u:n]])
    Qa = orth(ambient, tol, scale=_scale(T1))
    amb = Qa.shape[1]
    if u == s:
        return ReductionPlan(s, t, u, 0, Qa, amb)
    d = min(u, n - s)
    Vb = T1.A[:, :d]
    Wb = T1.B[:, n - d:]
    Z = common_complement(Vb, Wb, Qa, seed=seed, tol=tol)
    plan = ReductionPlan(s, t, u, d, Z, amb)
    if Z.shape[1] != amb - d:
        raise ComplementError(f"dim Z = {Z.shape[1]}, expected {amb - d}")
    return plan


def peel_columns(T1: Pencil, plan: ReductionPlan, Zbasis=None):
    """Split off ``2d`` rank-one columns and express the middle block in ``Z``.

    Returns ``(peeled, core, M)``.  With ``T2 = apply_transform(T1, M)``, the
    first ``d`` and last ``d`` columns of ``T2`` are the ``peeled`` terms, the
    middle columns occupy only the first ``dim Z`` rows and equal ``core``
    there.
    """
    Z = plan.Zbasis if Zbasis is None else np.asarray(Zbasis, dtype=float)
    m, n = T1.shape
    s, u, d = plan.s, plan.u, plan.d
    k = Z.shape[1]
    R = np.eye(n)
    if d:
        Va = np.hstack([T1.A[:, :d], Z])
        for j in range(d, s):
            c = np.linalg.lstsq(Va, T1.A[:, j], rcond=None)[0]
            R[:d, j] = -c[:d]
        Wb = np.hstack([T1.B[:, n - d:], Z])
        for j in range(u, n - d):
            c = np.linalg.lstsq(Wb, T1.B[:, j], rcond=None)[0]
            R[n - d:, j] = -c[:d]
    G = np.vstack([Z.T, complement(Z).T])
    M = ModeTransform(np.eye(2), G, R)
    T2 = apply_transform(T1, M)

    mid = slice(d, n - d)
    leak = np.linalg.norm(T2.A[k:, mid]) + np.linalg.norm(T2.B[k:, mid])
    if leak > 1e-7 * max(_scale(T1), 1e-300):
        raise ComplementError(f"middle columns are not inside Z (leak {leak:.3g})")

    peeled = [RankOneTerm([1.0, 0.0], T2.A[:, i], unit(n, i)) for i in range(d)]
    peeled += [RankOneTerm([0.0, 1.0], T2.B[:, j], unit(n, j)) for j in range(n - d, n)]
    core = Pencil(T2.A[:k, mid], T2.B[:k, mid])
    return peeled, core, M


# ------------------------------------------------------------ square singular


def reduce_rank_deficient(T: Pencil, tol: float = RANK_TOL):
    """Peel the bordering row of a square pencil whose slices both have rank ``n - 1``.

    After ``L = U^T`` and ``R = V`` from the SVD of slice 1, slice 1 is
    ``diag(A_{n-1}, 0)`` and the last row of the pencil lives in slice 2 only,
    so it is one rank-one term.  Returns ``(border_terms, inner, M)`` where
    ``inner`` is the ``(n-1) x n`` pencil formed by the remaining rows of
    ``apply_transform(T, M)``.
    """
    n = T.n
    if T.m != n:
        raise RankAssumptionError(f"pencil must be square, got {T.shape}")
    scale = _scale(T)
    U, sa, Vt = np.linalg.svd(T.A)
    sb = np.linalg.svd(T.B, compute_uv=False)
    ra, rb = _rank(sa, scale, tol), _rank(sb, scale, tol)
    if ra != n - 1 or rb != n - 1:
        raise RankAssumptionError(f"slice ranks are ({ra}, {rb}), expected both {n - 1}")
    M = ModeTransform(np.eye(2), U.T, Vt.T)
    T1 = apply_transform(T, M)
    border = [RankOneTerm([0.0, 1.0], unit(n, n - 1), T1.B[n - 1])]
    inner = Pencil(T1.A[: n - 1], T1.B[: n - 1])
    return border, inner, M


def _peel_zero_rows(T: Pencil, which: int, tol: float):
    """Peel two rows of a square pencil whose slice ``which`` has rank at most ``n - 2``."""
    n = T.n
    X = T.A if which == 0 else T.B
    U, _, _ = np.linalg.svd(X)
    M = ModeTransform(np.eye(2), U.T, np.eye(n))
    T1 = apply_transform(T, M)
    other = T1.B if which == 0 else T1.A
    w = unit(2, 1 - which)
    peeled = [RankOneTerm(w, unit(n, i), other[i]) for i in (n - 2, n - 1)]
    core = Pencil(T1.A[: n - 2], T1.B[: n - 2])
    return peeled, core, M


# ----------------------------------------------------------------- dispatcher


@dataclass
class _Context:
    tol: float
    seed: int
    trace: list
    max_depth: int


def _embed_rows(D: Decomposition, m: int, rows: slice) -> list[RankOneTerm]:
    out = []
    for t in D.terms:
        u = np.zeros(m)
        u[rows] = t.u
        out.append(RankOneTerm(t.alpha, u, t.v))
    return out


def _log(ctx: _Context, branch: str, T: Pencil, terms: int, depth: int, **extra):
    entry = {"branch": branch, "shape": [T.m, T.n], "terms": terms, "depth": depth}
    entry.update(extra)
    ctx.trace.append(entry)
    return entry


def _check_budget(ctx, T: Pencil, emitted: int, core_shape, branch: str):
    budget = _bound(T.m, T.n)
    need = emitted + _bound(*core_shape)
    if need > budget:
        raise DecompositionError(
            f"{branch}: {emitted} terms plus a {core_shape} core exceed the bound {budget}",
            ctx.trace,
        )


def _decompose(T: Pencil, ctx: _Context, depth: int) -> Decomposition:
    try:
        return _dispatch(T, ctx, depth)
    except DecompositionError:
        raise
    except PencilError as exc:
        _log(ctx, "failed", T, 0, depth, error=f"{type(exc).__name__}: {exc}")
        raise DecompositionError(f"{type(exc).__name__}: {exc}", ctx.trace) from exc


def _dispatch(T: Pencil, ctx: _Context, depth: int) -> Decomposition:
    m, n = T.shape
    if depth > ctx.max_depth:
        raise DecompositionError("recursion depth exceeded", ctx.trace)
    if m == 0 or n == 0 or T.norm() == 0.0:
        _log(ctx, "zero", T, 0, depth)
        return Decomposition(m, n, [])

    if m > n:
        _log(ctx, "transpose", T, 0, depth)
        D = _decompose(T.transpose(), ctx, depth)
        return Decomposition(m, n, [t.swap_modes() for t in D.terms])

    # compress to the row and column spaces of the pencil
    rows = np.hstack([T.A, T.B])
    cols = np.vstack([T.A, T.B])
    Ur, sr, _ = np.linalg.svd(rows, full_matrices=False)
    _, sc, Vtc = np.linalg.svd(cols, full_matrices=False)
    scale = _scale(T)
    r_row, r_col = _rank(sr, scale, ctx.tol), _rank(sc, scale, ctx.tol)
    if r_row < m or r_col < n:
        P, Q = Ur[:, :r_row], Vtc[:r_col].T
        core = Pencil(P.T @ T.A @ Q, P.T @ T.B @ Q)
        _log(ctx, "compress", T, 0, depth, core=[r_row, r_col])
        Dc = _decompose(core, ctx, depth + 1)
        return Decomposition(m, n, [RankOneTerm(t.alpha, P @ t.u, Q @ t.v) for t in Dc.terms])

    X = T.to_array().reshape(2, m * n)
    Us, ss, Vts = np.linalg.svd(X, full_matrices=False)
    if _rank(ss, ss[0], ctx.tol) <= 1:
        # T = w (x) M for a single m x n matrix M
        w, Mx = Us[:, 0], ss[0] * Vts[0].reshape(m, n)
        Um, sm, Vtm = np.linalg.svd(Mx, full_matrices=False)
        terms = [RankOneTerm(w, sm[i] * Um[:, i], Vtm[i]) for i in range(sm.size) if sm[i] > ctx.tol * sm[0]]
        _log(ctx, "single_slice", T, len(terms), depth)
        return Decomposition(m, n, terms)

    if m == 1:
        D = small.decompose_row(T, ctx.tol)
        ctx.trace.extend({**e, "depth": depth} for e in D.trace)
        return Decomposition(m, n, D.terms)
    if n >= 2 * m:
        D = small.slice_split(T, ctx.tol)
        ctx.trace.extend({**e, "depth": depth} for e in D.trace)
        return Decomposition(m, n, D.terms)
    if m == 2:
        D = small.decompose_2x2(T, ctx.tol) if n == 2 else small.decompose_2x3(T, ctx.tol)
        ctx.trace.extend({**e, "depth": depth} for e in D.trace)
        return Decomposition(m, n, D.terms)
    if m == n:
        return _decompose_square(T, ctx, depth)
    return _decompose_staircase(T, ctx, depth)


def _decompose_square(T: Pencil, ctx: _Context, depth: int) -> Decomposition:
    n = T.n
    scale = _scale(T)
    sa = np.linalg.svd(T.A, compute_uv=False)
    sb = np.linalg.svd(T.B, compute_uv=False)
    thresh = BORDERLINE * ctx.tol * scale
    if sa[-1] > thresh or sb[-1] > thresh:
        mu, lam, smin, _ = select_element(T, seed=ctx.seed)
        D = decompose_nonsingular(T, (mu, lam), seed=ctx.seed)
        ctx.trace.extend({**e, "depth": depth} for e in D.trace)
        return Decomposition(n, n, D.terms)

    ra, rb = _rank(sa, scale, ctx.tol), _rank(sb, scale, ctx.tol)
    if min(ra, rb) <= n - 2:
        which = 0 if ra <= rb else 1
        peeled, core, M = _peel_zero_rows(T, which, ctx.tol)
        _check_budget(ctx, T, len(peeled), core.shape, "peel_zero_rows")
        _log(ctx, "peel_zero_rows", T, len(peeled), depth, slice=which, slice_ranks=[ra, rb])
        Dc = _decompose(core, ctx, depth + 1)
        terms = peeled + _embed_rows(Dc, n, slice(0, n - 2))
        return pull_back(Decomposition(n, n, terms), M)

    border, inner, M = reduce_rank_deficient(T, ctx.tol)
    _check_budget(ctx, T, len(border), inner.shape, "reduce_rank_deficient")
    _log(ctx, "reduce_rank_deficient", T, len(border), depth, slice_ranks=[ra, rb])
    Di = _decompose(inner, ctx, depth + 1)
    terms = border + _embed_rows(Di, n, slice(0, n - 1))
    return pull_back(Decomposition(n, n, terms), M)


def _decompose_staircase(T: Pencil, ctx: _Context, depth: int) -> Decomposition:
    m, n = T.shape
    M1, T1, s, t, u = column_normal_form(T, ctx.tol)
    if s + t < n:
        # trailing zero columns (only reachable through rounding after compression)
        core = Pencil(T1.A[:, : s + t], T1.B[:, : s + t])
        _log(ctx, "drop_zero_columns", T, 0, depth)
        Dc = _decompose(core, ctx, depth + 1)
        terms = [RankOneTerm(x.alpha, x.u, np.concatenate([x.v, np.zeros(n - s - t)])) for x in Dc.terms]
        return pull_back(Decomposition(m, n, terms), M1)

    plan = plan_reduction(T1, s, t, u, seed=ctx.seed, tol=ctx.tol)
    staircase = {"s": s, "t": t, "u": u, "d": plan.d, "ambient_dim": plan.ambient_dim}
    D1 = split_disjoint(T1, plan)
    if D1 is not None:
        _log(ctx, "split_disjoint", T, len(D1), depth, **staircase)
        return pull_back(D1, M1)
    if plan.d == 0:
        raise DecompositionError("staircase reduction made no progress (d = 0)", ctx.trace)

    peeled, core, M2 = peel_columns(T1, plan)
    _check_budget(ctx, T, len(peeled), core.shape, "peel_columns")
    _log(ctx, "peel_columns", T, len(peeled), depth, core=list(core.shape), **staircase)
    Dc = _decompose(core, ctx, depth + 1)
    k, d = core.m, plan.d
    terms = list(peeled)
    for x in Dc.terms:
        uu = np.zeros(m)
        uu[:k] = x.u
        vv = np.zeros(n)
        vv[d: n - d] = x.v
        terms.append(RankOneTerm(x.alpha, uu, vv))
    D2 = pull_back(Decomposition(m, n, terms), M2)
    return pull_back(D2, M1)


def decompose(T: Pencil, tol: float = RANK_TOL, seed: int = 0) -> Decomposition:
    """Decompose ``T`` into at most ``max_rank_bound(m, n)`` rank-one terms.

    The returned decomposition carries the dispatch trace (one entry per
    reduction step with its branch name, shape, terms emitted and depth).

    Raises
    ------
    DecompositionError
        If any step fails; the partial trace is attached.
    """
    ctx = _Context(tol=tol, seed=seed, trace=[], max_depth=T.m + T.n)
    D = _decompose(T, ctx, 0)
    if T.m and T.n and len(D) > _bound(T.m, T.n):
        raise DecompositionError(
            f"{len(D)} terms exceed the bound {_bound(T.m, T.n)}", ctx.trace
        )
    D.trace = ctx.trace
    return D


def decompose_small(T: Pencil, tol: float = RANK_TOL, seed: int = 0) -> Decomposition:
    """Decompose a pencil with at most two rows (or columns).

    Degenerate inputs are compressed first, so the bounds ``min(2, n)``,
    3 (2 x 2 and 2 x 3) and 4 (2 x n, n >= 4) hold for every pencil.
    """
    if min(T.m, T.n) > 2:
        raise ValueError(f"decompose_small needs a side of length at most 2, got {T.shape}")
    return decompose(T, tol=tol, seed=seed)
