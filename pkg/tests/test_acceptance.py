"""Acceptance criteria, one test each.

Every test records a single PASS/FAIL line; the lines are printed in the
terminal summary of a pytest run and by ``python tests/test_acceptance.py``.
"""
import time

import numpy as np
import pytest

from pencilrank import (
    AlsConfig,
    Pencil,
    als_search,
    decompose,
    decompose_nonsingular,
    gen_rank_deficient,
    gen_rotation_pencil,
    max_rank_bound,
    min_rank_estimate,
    residual,
)
from pencilrank.cli import main

from conftest import fixture_corpus

RESULTS: dict[int, str] = {}

RESIDUAL_TOL = 1e-8


def record(number, title, ok, detail):
    line = f"{'PASS' if ok else 'FAIL'} criterion {number}: {title} ({detail})"
    RESULTS[number] = line
    print(line)
    return ok


def instances(shape, count, salt):
    """``count`` seeded standard normal pencils of the given shape."""
    m, n = shape
    for child in np.random.SeedSequence([salt, m, n]).spawn(count):
        rng = np.random.default_rng(child)
        yield Pencil(rng.standard_normal((m, n)), rng.standard_normal((m, n)))


def sweep(shapes, count, salt, limit=None):
    """Decompose ``count`` random pencils per shape; return (failures, worst residual, max excess)."""
    failures, worst = [], 0.0
    for m, n in shapes:
        bound = max_rank_bound(m, n).bound if limit is None else limit[(m, n)]
        for k, T in enumerate(instances((m, n), count, salt)):
            D = decompose(T, seed=k)
            res = residual(T, D)
            worst = max(worst, res)
            if len(D) > bound or not res <= RESIDUAL_TOL:
                failures.append(((m, n), k, len(D), res))
    return failures, worst


def test_bound_compliance():
    shapes = [(m, n) for n in range(1, 11) for m in range(1, n + 1)] + [(6, 12), (8, 16)]
    start = time.perf_counter()
    failures, worst = sweep(shapes, 100, salt=1)
    elapsed = time.perf_counter() - start
    ok = not failures and elapsed < 120
    record(1, "bound compliance on all shapes up to 10x10 plus 6x12 and 8x16", ok,
           f"{len(shapes) * 100} tensors, {len(failures)} failures, worst residual {worst:.1e}, {elapsed:.1f}s")
    assert not failures, failures[:5]
    assert elapsed < 120


FIXTURE_BOUNDS = {
    (2, 2): 3, (2, 3): 3, (2, 4): 4, (2, 5): 4, (2, 7): 4, (2, 9): 4,
    (3, 3): 4, (3, 4): 5, (3, 5): 5, (4, 4): 6, (5, 5): 7,
}


def test_fixture_bounds():
    failures, worst = sweep(FIXTURE_BOUNDS, 200, salt=2, limit=FIXTURE_BOUNDS)
    ok = not failures
    record(2, "small-shape fixture bounds", ok,
           f"{len(FIXTURE_BOUNDS)} shapes x 200, {len(failures)} failures, worst residual {worst:.1e}")
    assert not failures, failures[:5]


def test_singular_path():
    failures, fired, total = [], 0, 0
    sizes = list(range(3, 9))
    for k in range(200):
        n = sizes[k % len(sizes)]
        T = gen_rank_deficient(n, n - 1, seed=3000 + k)
        D = decompose(T, seed=k)
        total += 1
        took = any(e["branch"] == "reduce_rank_deficient" for e in D.trace)
        fired += took
        if not took or len(D) > 3 * n // 2 or not residual(T, D) <= RESIDUAL_TOL:
            failures.append((n, k, len(D)))
    ok = not failures
    record(3, "corank-one square pencils use the bordered reduction", ok,
           f"{total} tensors, branch fired {fired}/{total}, {len(failures)} failures")
    assert not failures, failures[:5]


def test_symmetrization_path():
    failures, worst_sym = [], 0.0
    sizes = list(range(2, 9))
    for k, child in enumerate(np.random.SeedSequence(4).spawn(200)):
        n = sizes[k % len(sizes)]
        rng = np.random.default_rng(child)
        T = Pencil(rng.standard_normal((n, n)), rng.standard_normal((n, n)))
        D = decompose_nonsingular(T, seed=k)
        info = D.trace[0]
        sym = max(info["bosch_symmetry_residual"])
        worst_sym = max(worst_sym, sym)
        if (len(D) > 3 * n // 2 or info["corrections"] > n // 2 or sym > 1e-10
                or not residual(T, D) <= RESIDUAL_TOL):
            failures.append((n, k, len(D), info["corrections"], sym))
    ok = not failures
    record(4, "symmetrization path counts and symmetry", ok,
           f"200 tensors, {len(failures)} failures, worst symmetry residual {worst_sym:.1e}")
    assert not failures, failures[:5]


def test_maximal_rank_witnesses():
    rows, ok = [], True
    for n in (2, 4, 6):
        T = gen_rotation_pencil(n, [np.pi / 3] * (n // 2))
        D = decompose(T)
        target = 3 * n // 2
        als = als_search(T, target - 1, AlsConfig(restarts=50))
        good = len(D) == target and residual(T, D) <= RESIDUAL_TOL and not als.found and als.best_residual > 1e-6
        ok &= good
        rows.append(f"n={n}: {len(D)} terms, ALS at {target - 1} best {als.best_residual:.1e}")
    record(5, "rotation pencils need the full count", ok, "; ".join(rows))
    assert ok, rows


def test_oracle_consistency():
    corpus = fixture_corpus()
    # a few instances of every fixture shape join the named corpus
    for shape in FIXTURE_BOUNDS:
        for k, T in enumerate(instances(shape, 3, salt=6)):
            corpus[f"fixture_{shape[0]}x{shape[1]}_{k}"] = T
    warm_bad, order_bad, worst = [], [], 0.0
    cfg = AlsConfig(max_rank=16, restarts=3, max_iters=200)
    for name, T in corpus.items():
        D = decompose(T)
        warm = als_search(T, len(D), AlsConfig(restarts=1, max_iters=50), init=D)
        worst = max(worst, warm.best_residual)
        if not warm.best_residual <= 1e-8:
            warm_bad.append(name)
        est = min_rank_estimate(T, cfg)
        if not est.lower <= est.upper:
            order_bad.append(name)
    ok = not warm_bad and not order_bad
    record(6, "warm-started ALS and rank brackets", ok,
           f"{len(corpus)} pencils, worst warm residual {worst:.1e}, "
           f"{len(warm_bad)} warm failures, {len(order_bad)} bracket failures")
    assert ok, (warm_bad, order_bad)


def test_cli_round_trip(tmp_path, capsys):
    from pencilrank.core import pencil_to_dict, save_json

    failures, unstable = [], []
    for name, T in fixture_corpus().items():
        src = tmp_path / f"{name}.json"
        out1, out2 = tmp_path / f"{name}.d1.json", tmp_path / f"{name}.d2.json"
        save_json(pencil_to_dict(T), src)
        c1 = main(["decompose", str(src), str(out1), "--seed", "5"])
        c2 = main(["decompose", str(src), str(out2), "--seed", "5"])
        c3 = main(["verify", str(src), str(out1)])
        if (c1, c2, c3) != (0, 0, 0):
            failures.append((name, c1, c2, c3))
        elif out1.read_bytes() != out2.read_bytes():
            unstable.append(name)
    for kind in (["random", "--m", "3", "--n", "5"], ["rotation", "--n", "4", "--angles", "pi/3,pi/4"],
                 ["rank-deficient", "--n", "5", "--rank", "4"]):
        a, b = tmp_path / "g1.json", tmp_path / "g2.json"
        main(["gen", *kind, "--seed", "7", "-o", str(a)])
        main(["gen", *kind, "--seed", "7", "-o", str(b)])
        if a.read_bytes() != b.read_bytes():
            unstable.append(kind[0])
    capsys.readouterr()
    ok = not failures and not unstable
    record(7, "CLI decompose/verify round trip with stable bytes", ok,
           f"{len(fixture_corpus())} files, {len(failures)} failures, {len(unstable)} unstable outputs")
    assert ok, (failures, unstable)


if __name__ == "__main__":
    import sys

    sys.exit(pytest.main([__file__, "-q", "-p", "no:cacheprovider"]))
