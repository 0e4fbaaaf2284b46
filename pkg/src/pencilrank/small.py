"""Closed-form decompositions for pencils with at most two rows.

* ``1 x n``: the pencil is a 2 x n matrix, so its SVD gives ``min(2, n)`` terms.
* ``2 x 2``: the two rows are normalized until both slices are symmetric,
  after which one all-equal term leaves a diagonal pencil (3 terms).
* ``2 x 3``: every column is made a rank-one subtensor by row and column
  operations (3 terms).
* ``2 x n`` with ``n >= 4``: each slice has matrix rank at most 2 (4 terms).
"""
from __future__ import annotations

import numpy as np

from ._frame import Frame, best_direction, rotation, unit
from .core import RANK_TOL, Decomposition, Pencil, RankOneTerm

# Coefficient ratios below this are treated as structural zeros.
STRUCTURAL_ZERO = 1e-12
# Coefficient ratios above this are considered balanced enough to divide by.
BALANCED = 0.1


def _entry(branch, T, terms, **extra):
    return {"branch": branch, "shape": [T.m, T.n], "terms": terms, **extra}


def decompose_row(T: Pencil, tol: float = RANK_TOL) -> Decomposition:
    """Decompose a 2 x 1 x n pencil through the SVD of its 2 x n flattening."""
    M = np.vstack([T.A[0], T.B[0]])
    U, s, Vt = np.linalg.svd(M, full_matrices=False)
    keep = [k for k in range(s.size) if s[k] > tol * s[0]] if s.size and s[0] > 0 else []
    terms = [RankOneTerm(s[k] * U[:, k], [1.0], Vt[k]) for k in keep]
    return Decomposition(1, T.n, terms, [_entry("row_svd", T, len(terms))])


def slice_split(T: Pencil, tol: float = RANK_TOL) -> Decomposition:
    """Decompose each slice by its SVD: at most ``2 * min(m, n)`` terms."""
    scale = max(np.linalg.norm(T.A, 2), np.linalg.norm(T.B, 2))
    terms = []
    for k, X in enumerate((T.A, T.B)):
        U, s, Vt = np.linalg.svd(X, full_matrices=False)
        for i in range(s.size):
            if s[i] > tol * scale:
                terms.append(RankOneTerm(unit(2, k), s[i] * U[:, i], Vt[i]))
    return Decomposition(T.m, T.n, terms, [_entry("slice_split", T, len(terms))])


def _coords(a, b, x):
    """Coefficients of ``x`` in the basis ``(a, b)`` of R^2."""
    return np.linalg.solve(np.column_stack([a, b]), x)


def decompose_2x2(T: Pencil, tol: float = RANK_TOL) -> Decomposition:
    """Three-term decomposition of a 2 x 2 x 2 pencil with full multilinear rank.

    Rows and columns are first mixed so that the fibers ``a = T[0, 0]`` and
    ``b = T[0, 1]`` are independent and ``c = T[1, 0]`` is not parallel to
    ``a``.  With ``c = alpha a + beta b`` the row operation
    ``row1 <- (row1 - alpha row0) / beta`` gives ``(a b; b c')`` and
    subtracting ``b`` from every entry leaves ``diag(a - b, c' - b)``.
    """
    f = Frame(T)
    M0, M1 = f.fibers_row(0), f.fibers_row(1)
    lc, ls, _ = best_direction(M0, M1)
    f.left([[lc, ls], [-ls, lc]])
    N0 = np.vstack([f.A[:, 0], f.B[:, 0]])
    N1 = np.vstack([f.A[:, 1], f.B[:, 1]])
    rc, rs, _ = best_direction(N0, N1)
    f.right(rotation(np.arctan2(rs, rc)))

    a, b, c = f.fiber(0, 0), f.fiber(0, 1), f.fiber(1, 0)
    alpha, beta = _coords(a, b, c)
    f.row_add(1, 0, -alpha)
    f.row_scale(1, 1.0 / beta)
    gamma, delta = _coords(a, b, f.fiber(1, 1))
    branch = "two_by_two_delta_zero" if abs(delta) <= STRUCTURAL_ZERO * (abs(gamma) + abs(delta)) else "two_by_two_delta_nonzero"

    a, b, c2 = f.fiber(0, 0), f.fiber(0, 1), f.fiber(1, 1)
    ones = np.ones(2)
    terms = [
        RankOneTerm(a - b, unit(2, 0), unit(2, 0)),
        RankOneTerm(c2 - b, unit(2, 1), unit(2, 1)),
        RankOneTerm(b, ones, ones),
    ]
    D = f.pull_back(terms)
    D.trace = [_entry(branch, T, 3, gamma=float(gamma), delta=float(delta))]
    return D


def decompose_2x3(T: Pencil, tol: float = RANK_TOL) -> Decomposition:
    """Three-term decomposition of a 2 x 2 x 3 pencil with full multilinear rank.

    Cases follow the shape of the first row after the best row mixing:
    rank one, or ``(a b 0)`` with the last fiber of row two written as
    ``z = alpha a + beta b``.
    """
    f = Frame(T)
    lc, ls, s2 = best_direction(f.fibers_row(0), f.fibers_row(1), k=1)
    f.left([[lc, ls], [-ls, lc]])
    scale = max(np.linalg.norm(T.A), np.linalg.norm(T.B))

    F0 = f.fibers_row(0)
    _, s, Vt = np.linalg.svd(F0)
    f.right(Vt.T)
    if s[1] <= tol * scale:
        return _row_rank_one(f, T, tol, scale)
    f.A[0, 2] = f.B[0, 2] = 0.0

    a, b, z = f.fiber(0, 0), f.fiber(0, 1), f.fiber(1, 2)
    if np.linalg.norm(z) <= tol * scale:
        # third column vanished: what is left is a 2 x 2 x 2 block
        sub = decompose_2x2(Pencil(f.A[:, :2], f.B[:, :2]), tol)
        terms = [RankOneTerm(t.alpha, t.u, np.append(t.v, 0.0)) for t in sub.terms]
        D = f.pull_back(terms)
        D.trace = [_entry("two_by_three_reduce_to_2x2", T, 0)] + sub.trace
        return D

    alpha, beta = _coords(a, b, z)
    big, small = max(abs(alpha), abs(beta)), min(abs(alpha), abs(beta))
    if small <= STRUCTURAL_ZERO * big:
        if abs(alpha) > abs(beta):
            f.col_swap(0, 1)
            alpha, beta = beta, alpha
        # make z exactly parallel to the new b
        f.col_add(1, 0, alpha / beta)
        return _alpha_zero(f, T, beta, scale)

    balanced = small >= BALANCED * big
    if not balanced:
        # rotate columns 0 and 1 so that z has equal coordinates
        phi = np.arctan2(beta, alpha) - np.pi / 4
        G = np.eye(3)
        G[:2, :2] = rotation(phi)
        f.right(G)
        a, b = f.fiber(0, 0), f.fiber(0, 1)
        alpha, beta = _coords(a, b, z)

    a, b, z = f.fiber(0, 0), f.fiber(0, 1), f.fiber(1, 2)
    x_a, x_b = _coords(a, b, f.fiber(1, 0))
    y_a, y_b = _coords(a, b, f.fiber(1, 1))
    f.col_add(0, 2, -x_b / beta)
    f.col_add(1, 2, -y_a / alpha)
    gamma = _coords(a, b, f.fiber(1, 0))[0]
    delta = _coords(a, b, f.fiber(1, 1))[1]
    terms = [
        RankOneTerm(a, [1.0, gamma], unit(3, 0)),
        RankOneTerm(b, [1.0, delta], unit(3, 1)),
        RankOneTerm(f.fiber(1, 2), unit(2, 1), unit(3, 2)),
    ]
    D = f.pull_back(terms)
    D.trace = [_entry("two_by_three_generic", T, 3, balanced=bool(balanced))]
    return D


def _alpha_zero(f: Frame, T: Pencil, beta: float, scale: float) -> Decomposition:
    # working pencil (a b 0; x y beta*b)
    a, b = f.fiber(0, 0), f.fiber(0, 1)
    x_b = _coords(a, b, f.fiber(1, 0))[1]
    y_b = _coords(a, b, f.fiber(1, 1))[1]
    f.col_add(0, 2, -x_b / beta)
    f.col_add(1, 2, -y_b / beta)
    gamma = _coords(a, b, f.fiber(1, 0))[0]
    # row1 -= gamma row0 clears (1, 0); the b-part it leaves in (1, 1) is moved out with col 2
    f.row_add(1, 0, -gamma)
    f.col_add(1, 2, gamma / beta)
    delta = _coords(a, b, f.fiber(1, 1))[0]

    if abs(delta) * np.linalg.norm(a) <= STRUCTURAL_ZERO * scale:
        terms = [
            RankOneTerm(f.fiber(0, 0), unit(2, 0), unit(3, 0)),
            RankOneTerm(f.fiber(0, 1), unit(2, 0), unit(3, 1)),
            RankOneTerm(f.fiber(1, 2), unit(2, 1), unit(3, 2)),
        ]
        branch = "two_by_three_alpha_zero_delta_zero"
    else:
        # (a b 0; 0 delta*a beta*b) -> (a b 0; 0 a b) -> (a a+b 0; 0 a+b b)
        f.row_scale(1, 1.0 / delta)
        f.col_scale(2, delta / beta)
        f.col_add(1, 0, 1.0)
        f.col_add(1, 2, 1.0)
        ab = 0.5 * (f.fiber(0, 1) + f.fiber(1, 1))
        terms = [
            RankOneTerm(f.fiber(0, 0), unit(2, 0), unit(3, 0)),
            RankOneTerm(ab, np.ones(2), unit(3, 1)),
            RankOneTerm(f.fiber(1, 2), unit(2, 1), unit(3, 2)),
        ]
        branch = "two_by_three_alpha_zero_delta_nonzero"
    D = f.pull_back(terms)
    D.trace = [_entry(branch, T, 3, gamma=float(gamma), delta=float(delta))]
    return D


def _row_rank_one(f: Frame, T: Pencil, tol: float, scale: float) -> Decomposition:
    # working pencil (a 0 0; x d e)
    f.A[0, 1:] = f.B[0, 1:] = 0.0
    DE = np.column_stack([f.fiber(1, 1), f.fiber(1, 2)])
    U, s, Vt = np.linalg.svd(DE)
    if s[1] > tol * scale:
        p, q = np.linalg.solve(DE, f.fiber(1, 0))
        f.col_add(0, 1, -p)
        f.col_add(0, 2, -q)
        terms = [
            RankOneTerm(f.fiber(0, 0), unit(2, 0), unit(3, 0)),
            RankOneTerm(f.fiber(1, 1), unit(2, 1), unit(3, 1)),
            RankOneTerm(f.fiber(1, 2), unit(2, 1), unit(3, 2)),
        ]
        branch = "two_by_three_row_rank1_independent"
    else:
        G = np.eye(3)
        G[1:, 1:] = Vt.T
        f.right(G)
        terms = [
            RankOneTerm(f.fiber(0, 0), unit(2, 0), unit(3, 0)),
            RankOneTerm(f.fiber(1, 0), unit(2, 1), unit(3, 0)),
            RankOneTerm(f.fiber(1, 1), unit(2, 1), unit(3, 1)),
        ]
        branch = "two_by_three_row_rank1_dependent"
    D = f.pull_back(terms)
    D.trace = [_entry(branch, T, 3)]
    return D
