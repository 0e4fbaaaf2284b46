import json
import subprocess
import sys

import numpy as np
import pytest

from pencilrank import Pencil, max_rank_bound, reducer
from pencilrank.cli import main
from pencilrank.core import load_decomposition, load_pencil, pencil_to_dict, save_json


@pytest.fixture
def run(capsys):
    def _run(*args):
        code = main([str(a) for a in args])
        out = capsys.readouterr().out
        try:
            doc = json.loads(out)
        except json.JSONDecodeError:
            doc = out
        return code, doc

    return _run


@pytest.fixture
def pencil_file(tmp_path):
    def _write(T, name="t.json"):
        path = tmp_path / name
        save_json(pencil_to_dict(T), path)
        return path

    return _write


class TestDecomposeVerify:
    def test_round_trip(self, run, tmp_path):
        src, out = tmp_path / "t.json", tmp_path / "d.json"
        assert run("gen", "random", "--m", 3, "--n", 3, "--seed", 5, "-o", src)[0] == 0
        code, doc = run("decompose", src, out)
        assert code == 0 and doc["status"] == "ok"
        assert doc["payload"]["terms"] <= 4 and doc["payload"]["max_rank_bound"] == 4
        assert set(doc["timings"]) == {"parse", "decompose", "write"}
        code, doc = run("verify", src, out)
        assert code == 0 and doc["payload"]["flags"] == []

    def test_trace_flag(self, run, tmp_path):
        src, out = tmp_path / "t.json", tmp_path / "d.json"
        run("gen", "rank-deficient", "--n", 4, "--rank", 3, "--seed", 1, "-o", src)
        code, doc = run("decompose", src, out, "--trace")
        assert code == 0
        assert doc["trace"][0]["branch"] == "reduce_rank_deficient"
        assert json.loads(out.read_text())["trace"] == doc["trace"]

    def test_malformed(self, run, tmp_path):
        bad = tmp_path / "bad.json"
        bad.write_text('{"m": 2, "n": ')
        code, doc = run("decompose", bad, tmp_path / "d.json")
        assert code == 2 and doc["status"] == "error" and doc["payload"]["code"] == "parse_error"

    def test_missing_file(self, run, tmp_path):
        code, doc = run("decompose", tmp_path / "nope.json", tmp_path / "d.json")
        assert code == 2 and doc["payload"]["message"]

    def test_zero_tensor(self, run, pencil_file, tmp_path):
        code, doc = run("decompose", pencil_file(Pencil.zeros(2, 3)), tmp_path / "d.json")
        assert code == 0 and doc["payload"]["terms"] == 0 and doc["payload"]["residual"] == 0.0

    def test_deleted_term_fails(self, run, pencil_file, tmp_path):
        src, out = pencil_file(Pencil(np.eye(3), np.diag([1.0, 2.0, 3.0]))), tmp_path / "d.json"
        run("decompose", src, out)
        doc = json.loads(out.read_text())
        doc["terms"].pop()
        out.write_text(json.dumps(doc))
        code, res = run("verify", src, out)
        assert code == 1 and res["status"] == "error"
        assert res["payload"]["code"] == "residual_exceeds_tol"
        assert res["payload"]["residual"] > 1e-8

    def test_count_exceeds_bound(self, run, pencil_file, tmp_path):
        src, out = pencil_file(Pencil(np.eye(2), np.zeros((2, 2)))), tmp_path / "d.json"
        run("decompose", src, out)
        doc = json.loads(out.read_text())
        doc["terms"] += [{"alpha": [0.0, 0.0], "u": [0.0, 0.0], "v": [0.0, 0.0]}] * 3
        out.write_text(json.dumps(doc))
        code, res = run("verify", src, out)
        assert code == 1
        assert res["payload"]["flags"] == ["count_exceeds_bound"]
        assert res["payload"]["residual_ok"] is True

    def test_shape_mismatch(self, run, pencil_file, tmp_path):
        out = tmp_path / "d.json"
        run("decompose", pencil_file(Pencil(np.eye(2), np.eye(2)), "a.json"), out)
        code, res = run("verify", pencil_file(Pencil(np.eye(3), np.eye(3)), "b.json"), out)
        assert code == 2 and res["payload"]["code"] == "shape_mismatch"

    def test_internal_error(self, run, pencil_file, tmp_path, monkeypatch):
        def broken(T, tol, seed):
            raise reducer.DecompositionError("forced", [{"branch": "zero", "shape": [1, 1], "terms": 0}])

        monkeypatch.setattr("pencilrank.cli.decompose", broken)
        code, res = run("decompose", pencil_file(Pencil(np.eye(2), np.eye(2))), tmp_path / "d.json")
        assert code == 3 and res["payload"]["code"] == "decomposition_error" and res["trace"]


class TestTable:
    @pytest.mark.parametrize("m, n, expected", [(2, 2, 3), (3, 4, 5), (5, 5, 7)])
    def test_cells(self, run, m, n, expected):
        code, doc = run("table", "--mmax", 6, "--nmax", 6)
        assert code == 0 and doc["payload"]["table"][m - 1][n - 1] == expected

    def test_matches_bound(self, run):
        _, doc = run("table", "--mmax", 12, "--nmax", 20)
        for m, row in enumerate(doc["payload"]["table"], start=1):
            assert row == [max_rank_bound(m, n).bound for n in range(1, 21)]

    def test_text(self, run):
        code, text = run("table", "--mmax", 3, "--nmax", 4, "--text")
        lines = text.splitlines()
        assert code == 0 and len(lines) == 4
        assert lines[2].split() == ["2", "2", "3", "3", "4"]
        assert len({len(line) for line in lines}) == 1

    @pytest.mark.parametrize("args", [("--mmax", 65), ("--nmax", 0)])
    def test_limits(self, run, args):
        assert run("table", *args)[0] == 2


class TestGen:
    def test_rotation(self, run, tmp_path):
        out = tmp_path / "r.json"
        assert run("gen", "rotation", "--n", 4, "--angles", "pi/3,pi/4", "-o", out)[0] == 0
        T = load_pencil(out)
        np.testing.assert_allclose(T.B[:2, :2], [[0.5, -np.sqrt(3) / 2], [np.sqrt(3) / 2, 0.5]])
        assert np.all(T.B[:2, 2:] == 0)

    def test_random_bytes_stable(self, run, tmp_path):
        a, b = tmp_path / "a.json", tmp_path / "b.json"
        run("gen", "random", "--m", 3, "--n", 5, "--seed", 7, "-o", a)
        run("gen", "random", "--m", 3, "--n", 5, "--seed", 7, "-o", b)
        assert a.read_bytes() == b.read_bytes()

    def test_rank_deficient(self, run, tmp_path):
        out = tmp_path / "r.json"
        run("gen", "rank-deficient", "--n", 5, "--rank", 4, "-o", out)
        T = load_pencil(out)
        assert np.linalg.matrix_rank(T.A) == np.linalg.matrix_rank(T.B) == 4

    @pytest.mark.parametrize(
        "args",
        [
            ("random", "--m", 3),
            ("rotation", "--n", 3, "--angles", "1.0"),
            ("rank-deficient", "--n", 3, "--rank", 5),
            ("rotation", "--n", 2, "--angles", "banana"),
            ("spiral", "--n", 2),
        ],
    )
    def test_invalid(self, run, tmp_path, args):
        assert run("gen", *args, "-o", tmp_path / "x.json")[0] == 2

    def test_env_seed(self, run, tmp_path, monkeypatch):
        monkeypatch.setenv("PENCILRANK_SEED", "7")
        a, b = tmp_path / "a.json", tmp_path / "b.json"
        run("gen", "random", "--m", 2, "--n", 2, "-o", a)
        monkeypatch.delenv("PENCILRANK_SEED")
        run("gen", "random", "--m", 2, "--n", 2, "--seed", 7, "-o", b)
        assert a.read_bytes() == b.read_bytes()


class TestOracle:
    def test_rank_one(self, run, pencil_file):
        T = Pencil(np.outer([1.0, 2.0], [1.0, -1.0]), np.outer([3.0, 6.0], [1.0, -1.0]))
        code, doc = run("oracle", pencil_file(T), "--restarts", 3)
        assert code == 0 and (doc["payload"]["lower"], doc["payload"]["upper"]) == (1, 1)

    def test_rotation(self, run, tmp_path):
        src = tmp_path / "r.json"
        run("gen", "rotation", "--n", 2, "--angles", "pi/3", "-o", src)
        code, doc = run("oracle", src, "--restarts", 50)
        p = doc["payload"]
        assert code == 0 and p["lower"] >= 2 and p["upper"] == 3
        assert p["best_residuals"]["2"] > 1e-6

    def test_random_4x4(self, run, tmp_path):
        src = tmp_path / "r.json"
        run("gen", "random", "--m", 4, "--n", 4, "--seed", 3, "-o", src)
        code, doc = run("oracle", src, "--restarts", 5)
        assert code == 0 and doc["payload"]["upper"] <= 6

    def test_parse_error(self, run, tmp_path):
        bad = tmp_path / "bad.json"
        bad.write_text("[]")
        assert run("oracle", bad)[0] == 2


def test_usage_error(run):
    assert run("decompose")[0] == 2


def test_module_entry_point(tmp_path):
    out = subprocess.run([sys.executable, "-m", "pencilrank", "table", "--mmax", "2", "--nmax", "2"],
                         capture_output=True, text=True, check=False)
    assert out.returncode == 0
    assert json.loads(out.stdout)["payload"]["table"] == [[1, 2], [2, 3]]


def test_decomposition_file_loads(run, tmp_path):
    src, out = tmp_path / "t.json", tmp_path / "d.json"
    run("gen", "random", "--m", 2, "--n", 5, "--seed", 1, "-o", src)
    run("decompose", src, out)
    D = load_decomposition(out)
    assert (D.m, D.n) == (2, 5) and len(D) <= 4
