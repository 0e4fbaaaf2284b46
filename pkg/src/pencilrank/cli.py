"""Command-line interface: ``pencilrank {decompose,verify,table,gen,oracle}``.

Every command prints one JSON object ``{"status", "payload", "trace",
"timings"}`` on stdout.  Exit codes: 0 ok, 1 verification failed, 2 usage or
parse error, 3 internal error.
"""
from __future__ import annotations

import argparse
import os
import sys
import time
from contextlib import contextmanager
from dataclasses import dataclass, field
from typing import Any, Optional

import numpy as np

from .core import (
    RANK_TOL,
    FormatError,
    _bound,
    dumps_canonical,
    load_decomposition,
    load_pencil,
    pencil_to_dict,
    residual,
    save_json,
)
from .oracle import AlsConfig, gen_random, gen_rank_deficient, gen_rotation_pencil, min_rank_estimate
from .reducer import DecompositionError, decompose

EXIT_OK, EXIT_FAIL, EXIT_USAGE, EXIT_INTERNAL = 0, 1, 2, 3
TABLE_MAX = 64


@dataclass
class CommandResult:
    status: str
    payload: dict
    exit_code: int = EXIT_OK
    trace: Optional[list] = None
    timings: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        out: dict[str, Any] = {"status": self.status, "payload": self.payload, "timings": self.timings}
        if self.trace is not None:
            out["trace"] = self.trace
        return out


def _error(code: str, message: str, exit_code: int, trace=None, timings=None) -> CommandResult:
    return CommandResult(
        "error", {"code": code, "message": message}, exit_code, trace, dict(timings or {})
    )


class _Timer:
    def __init__(self):
        self.timings: dict[str, float] = {}

    @contextmanager
    def phase(self, name: str):
        start = time.perf_counter()
        try:
            yield
        finally:
            self.timings[name] = round((time.perf_counter() - start) * 1e3, 3)


def _default_seed() -> int:
    raw = os.environ.get("PENCILRANK_SEED")
    try:
        return int(raw) if raw is not None else 0
    except ValueError:
        return 0


def cmd_decompose(input_path, output_path, tol: float = RANK_TOL, seed: int = 0, trace: bool = False) -> CommandResult:
    timer = _Timer()
    try:
        with timer.phase("parse"):
            T = load_pencil(input_path)
    except (OSError, FormatError) as exc:
        return _error("parse_error", str(exc), EXIT_USAGE, timings=timer.timings)
    try:
        with timer.phase("decompose"):
            D = decompose(T, tol=tol, seed=seed)
    except DecompositionError as exc:
        return _error("decomposition_error", str(exc), EXIT_INTERNAL, exc.trace, timer.timings)
    with timer.phase("write"):
        save_json(D.to_dict(include_trace=trace), output_path)
    payload = {
        "shape": [T.m, T.n],
        "terms": len(D),
        "residual": residual(T, D),
        "max_rank_bound": _bound(T.m, T.n),
        "output": str(output_path),
    }
    return CommandResult("ok", payload, EXIT_OK, D.trace if trace else None, timer.timings)


def cmd_verify(tensor_path, decomposition_path, tol: float = 1e-8) -> CommandResult:
    timer = _Timer()
    try:
        with timer.phase("parse"):
            T = load_pencil(tensor_path)
            D = load_decomposition(decomposition_path)
    except (OSError, FormatError) as exc:
        return _error("parse_error", str(exc), EXIT_USAGE, timings=timer.timings)
    if (T.m, T.n) != (D.m, D.n):
        return _error(
            "shape_mismatch",
            f"tensor is {T.m}x{T.n}, decomposition is {D.m}x{D.n}",
            EXIT_USAGE,
            timings=timer.timings,
        )
    with timer.phase("verify"):
        res = residual(T, D)
    bound = _bound(T.m, T.n)
    flags = []
    if not res <= tol:
        flags.append("residual_exceeds_tol")
    if len(D) > bound:
        flags.append("count_exceeds_bound")
    payload = {
        "shape": [T.m, T.n],
        "residual": res,
        "tol": tol,
        "residual_ok": res <= tol,
        "terms": len(D),
        "max_rank_bound": bound,
        "count_ok": len(D) <= bound,
        "flags": flags,
    }
    if flags:
        payload.update(code=flags[0], message=", ".join(flags))
        return CommandResult("error", payload, EXIT_FAIL, None, timer.timings)
    return CommandResult("ok", payload, EXIT_OK, None, timer.timings)


def bound_table(mmax: int, nmax: int) -> list[list[int]]:
    return [[_bound(m, n) for n in range(1, nmax + 1)] for m in range(1, mmax + 1)]


def format_table(table: list[list[int]]) -> str:
    nmax = len(table[0]) if table else 0
    width = max(3, len(str(max((max(r) for r in table), default=0))) + 1)
    head = "m\\n".rjust(4) + "".join(str(n).rjust(width) for n in range(1, nmax + 1))
    lines = [head]
    for m, row in enumerate(table, start=1):
        lines.append(str(m).rjust(4) + "".join(str(x).rjust(width) for x in row))
    return "\n".join(lines)


def cmd_table(mmax: int = 10, nmax: int = 10) -> CommandResult:
    if not (1 <= mmax <= TABLE_MAX and 1 <= nmax <= TABLE_MAX):
        return _error("invalid_arguments", f"mmax and nmax must lie in 1..{TABLE_MAX}", EXIT_USAGE)
    table = bound_table(mmax, nmax)
    return CommandResult("ok", {"mmax": mmax, "nmax": nmax, "table": table, "text": format_table(table)})


def cmd_gen(kind: str, output_path, m=None, n=None, rank=None, angles=None, seed: int = 0) -> CommandResult:
    try:
        if kind == "random":
            if m is None or n is None:
                raise ValueError("random needs --m and --n")
            T = gen_random(m, n, seed)
        elif kind == "rotation":
            if n is None or angles is None:
                raise ValueError("rotation needs --n and --angles")
            T = gen_rotation_pencil(n, angles)
        elif kind == "rank-deficient":
            if n is None or rank is None:
                raise ValueError("rank-deficient needs --n and --rank")
            T = gen_rank_deficient(n, rank, seed)
        else:
            raise ValueError(f"unknown generator {kind!r}")
    except ValueError as exc:
        return _error("invalid_arguments", str(exc), EXIT_USAGE)
    save_json(pencil_to_dict(T), output_path)
    return CommandResult("ok", {"kind": kind, "shape": [T.m, T.n], "output": str(output_path)})


def cmd_oracle(input_path, max_rank=None, restarts: int = 50, seed: int = 0, max_iters: int = 500) -> CommandResult:
    timer = _Timer()
    try:
        with timer.phase("parse"):
            T = load_pencil(input_path)
    except (OSError, FormatError) as exc:
        return _error("parse_error", str(exc), EXIT_USAGE, timings=timer.timings)
    if max_rank is None:
        max_rank = max(_bound(T.m, T.n), 1)
    try:
        cfg = AlsConfig(max_rank=max_rank, restarts=restarts, max_iters=max_iters, seed=seed)
        with timer.phase("oracle"):
            est = min_rank_estimate(T, cfg)
    except ValueError as exc:
        return _error("invalid_arguments", str(exc), EXIT_USAGE, timings=timer.timings)
    except DecompositionError as exc:
        return _error("decomposition_error", str(exc), EXIT_INTERNAL, exc.trace, timer.timings)
    payload = {
        "shape": [T.m, T.n],
        "lower": est.lower,
        "upper": est.upper,
        "reducer_terms": est.reducer_terms,
        "best_residuals": {str(r): v for r, v in sorted(est.residuals.items())},
        "restarts": restarts,
    }
    return CommandResult("ok", payload, EXIT_OK, None, timer.timings)


def _number(text: str) -> float:
    text = text.strip().lower()
    if text.endswith("pi"):
        coef = text[:-2].rstrip("*").strip()
        return (float(coef) if coef else 1.0) * np.pi
    return float(text)


def _angles(text: str) -> list[float]:
    """Parse ``"pi/3, 0.5, 2*pi/5"`` into radians."""
    out = []
    for part in text.split(","):
        num, _, den = part.partition("/")
        try:
            out.append(_number(num) / (float(den) if den else 1.0))
        except ValueError:
            raise argparse.ArgumentTypeError(f"bad angle {part.strip()!r}") from None
    return out


def build_parser() -> argparse.ArgumentParser:
    seed = _default_seed()
    parser = argparse.ArgumentParser(prog="pencilrank", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("decompose", help="decompose a pencil JSON file")
    p.add_argument("input")
    p.add_argument("output")
    p.add_argument("--tol", type=float, default=RANK_TOL, help="relative rank tolerance")
    p.add_argument("--seed", type=int, default=seed)
    p.add_argument("--trace", action="store_true", help="include the dispatch trace")

    p = sub.add_parser("verify", help="check a decomposition against a pencil")
    p.add_argument("tensor")
    p.add_argument("decomposition")
    p.add_argument("--tol", type=float, default=1e-8, help="residual tolerance")

    p = sub.add_parser("table", help="print the maximal-rank table")
    p.add_argument("--mmax", type=int, default=10)
    p.add_argument("--nmax", type=int, default=10)
    p.add_argument("--text", action="store_true", help="print the aligned table only")

    p = sub.add_parser("gen", help="write a generated pencil")
    p.add_argument("kind", choices=["random", "rotation", "rank-deficient"])
    p.add_argument("-o", "--output", required=True)
    p.add_argument("--m", type=int)
    p.add_argument("--n", type=int)
    p.add_argument("--rank", type=int)
    p.add_argument("--angles", type=_angles, help="comma separated, e.g. pi/3,pi/4")
    p.add_argument("--seed", type=int, default=seed)

    p = sub.add_parser("oracle", help="bracket the rank with ALS")
    p.add_argument("input")
    p.add_argument("--max-rank", type=int)
    p.add_argument("--restarts", type=int, default=50)
    p.add_argument("--max-iters", type=int, default=500)
    p.add_argument("--seed", type=int, default=seed)
    return parser


def run(argv=None) -> CommandResult:
    args = build_parser().parse_args(argv)
    if args.command == "decompose":
        return cmd_decompose(args.input, args.output, args.tol, args.seed, args.trace)
    if args.command == "verify":
        return cmd_verify(args.tensor, args.decomposition, args.tol)
    if args.command == "table":
        return cmd_table(args.mmax, args.nmax)
    if args.command == "gen":
        return cmd_gen(args.kind, args.output, args.m, args.n, args.rank, args.angles, args.seed)
    return cmd_oracle(args.input, args.max_rank, args.restarts, args.seed, args.max_iters)


def main(argv=None) -> int:
    try:
        result = run(argv)
    except SystemExit as exc:  # argparse usage errors
        return int(exc.code or 0)
    except Exception as exc:  # noqa: BLE001 - reported as an internal error
        result = _error("internal_error", f"{type(exc).__name__}: {exc}", EXIT_INTERNAL)
    args = sys.argv[1:] if argv is None else argv
    if result.status == "ok" and args[:1] == ["table"] and "--text" in args:
        sys.stdout.write(result.payload["text"] + "\n")
    else:
        sys.stdout.write(dumps_canonical(result.to_dict()))
    return result.exit_code


if __name__ == "__main__":
    sys.exit(main())
