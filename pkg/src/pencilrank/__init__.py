"""Explicit rank-one decompositions of real 2 x m x n tensors.

A 2 x m x n tensor is handled as a pencil ``(A; B)`` of two m x n matrices.
:func:`decompose` returns at most ``max_rank_bound(m, n)`` rank-one terms
together with a trace of the reductions that produced them.
"""
from .core import (
    RANK_TOL,
    Decomposition,
    FormatError,
    ModeTransform,
    Pencil,
    PencilError,
    RankBound,
    RankOneTerm,
    ShapeError,
    SingularTransformError,
    apply_transform,
    load_decomposition,
    load_pencil,
    max_rank_bound,
    numerical_rank,
    pull_back,
    reconstruct,
    residual,
    unfolding_ranks,
)
from .oracle import (
    AlsConfig,
    AlsResult,
    RankEstimate,
    als_search,
    gen_random,
    gen_rank_deficient,
    gen_rotation_pencil,
    min_rank_estimate,
)
from .reducer import DecompositionError, decompose, decompose_small
from .symmetrize import decompose_nonsingular

__version__ = "0.1.0"

__all__ = [
    "RANK_TOL",
    "AlsConfig",
    "AlsResult",
    "Decomposition",
    "DecompositionError",
    "FormatError",
    "ModeTransform",
    "Pencil",
    "PencilError",
    "RankBound",
    "RankEstimate",
    "RankOneTerm",
    "ShapeError",
    "SingularTransformError",
    "als_search",
    "apply_transform",
    "decompose",
    "decompose_nonsingular",
    "decompose_small",
    "gen_random",
    "gen_rank_deficient",
    "gen_rotation_pencil",
    "load_decomposition",
    "load_pencil",
    "max_rank_bound",
    "min_rank_estimate",
    "numerical_rank",
    "pull_back",
    "reconstruct",
    "residual",
    "unfolding_ranks",
]
