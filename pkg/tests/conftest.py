import numpy as np
import pytest

from pencilrank import Pencil, gen_random, gen_rank_deficient, gen_rotation_pencil
from pencilrank.core import _bound, residual


def rotation_blocks(n, theta=np.pi / 3):
    return gen_rotation_pencil(n, [theta] * (n // 2))


def fixture_corpus():
    """Named pencils shared by the reducer, oracle and CLI suites."""
    corpus = {
        "zero_3x4": Pencil.zeros(3, 4),
        "rank_one_2x3": Pencil(np.outer([1.0, 2.0], [1.0, 0.0, -1.0]), np.outer([2.0, 4.0], [1.0, 0.0, -1.0])),
        "identity_pair_4": Pencil(np.eye(4), np.eye(4)),
        "diag_signs_2": Pencil(np.diag([1.0, -1.0]), np.eye(2)),
        "bordered_3": Pencil(np.diag([1.0, 1.0, 0.0]), [[0, 0, 0], [0, 0, 1.0], [0, 1.0, 0]]),
        "rotation_2": rotation_blocks(2),
        "rotation_4": rotation_blocks(4),
        "rotation_6": rotation_blocks(6),
        "rotation_mixed_4": gen_rotation_pencil(4, [np.pi / 3, np.pi / 4]),
        "rank_deficient_5": gen_rank_deficient(5, 4, seed=11),
        "rank_deficient_6_low": gen_rank_deficient(6, 3, seed=12),
    }
    for k, (m, n) in enumerate([(1, 4), (2, 2), (2, 3), (2, 5), (3, 3), (3, 4), (3, 5), (4, 4),
                                (5, 5), (4, 7), (5, 3), (6, 12)]):
        corpus[f"random_{m}x{n}"] = gen_random(m, n, seed=100 + k)
    return corpus


@pytest.fixture(scope="session")
def corpus():
    return fixture_corpus()


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def assert_decomposes(T, D, bound=None, tol=1e-8):
    """Check shape, residual and term count of ``D`` against ``T``."""
    assert (D.m, D.n) == (T.m, T.n)
    assert residual(T, D) <= tol
    limit = _bound(T.m, T.n) if bound is None else bound
    assert len(D) <= limit, f"{len(D)} terms, bound {limit}"


def pytest_terminal_summary(terminalreporter):
    import sys

    module = sys.modules.get("test_acceptance")
    results = getattr(module, "RESULTS", None)
    if results:
        terminalreporter.section("acceptance criteria")
        for number in sorted(results):
            terminalreporter.write_line(results[number])
