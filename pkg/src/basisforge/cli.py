"""
Command-line front end.

    basisforge run --config CFG.json [--out REPORT.json] [--csv NORMS.csv] [--no-vectors] [--verify]
    basisforge verify RESULT.json [--out REPORT.json]
    basisforge emit-matrix N
    basisforge bench [N ...]

Exit codes: 0 when every check passes, 2 on a verification failure, 1 on a
configuration or runtime error.
"""

from __future__ import annotations

import argparse
import csv
import sys
import time
from collections.abc import Sequence
from pathlib import Path

import numpy as np

from basisforge.config import RunConfig, load_config
from basisforge.driver import RunAborted, run
from basisforge.errors import ConfigurationError, ExhaustionError, VerificationError
from basisforge.l2core import SparseL2Vector
from basisforge.perturbation import (
    apply_naive,
    apply_structured,
    make_completion_matrix,
    materialize,
    orthogonality_defect,
)
from basisforge.serialize import dumps, load_result, result_to_json
from basisforge.verify import build_report, format_report, perturbation_csv

EXIT_OK, EXIT_ERROR, EXIT_FAIL = 0, 1, 2
EQUIVALENCE_TOL = 1e-12


def _error(message: str) -> int:
    print(f"error: {message}", file=sys.stderr)
    return EXIT_ERROR


def _write(path: str | None, text: str) -> None:
    if path:
        Path(path).write_text(text, encoding="utf-8")


def cmd_run(args: argparse.Namespace) -> int:
    try:
        config = load_config(args.config)
        if args.verify:
            config.verify = True
        result = run(config, workers=args.threads)
        report = build_report(result, config.alpha, config.epsilon)
    except RunAborted as exc:
        print(f"error: {exc} ({len(exc.partial.steps)} steps completed)", file=sys.stderr)
        return EXIT_FAIL if isinstance(exc.__cause__, VerificationError) else EXIT_ERROR
    except (ConfigurationError, ExhaustionError, ValueError) as exc:
        return _error(str(exc))
    return _emit(report, result, args)


def _emit(report, result, args: argparse.Namespace) -> int:
    doc = result_to_json(result, report, include_vectors=not args.no_vectors)
    text = dumps(doc)
    if args.out:
        _write(args.out, text)
    if getattr(args, "csv", None):
        _write(args.csv, perturbation_csv(report.perturbation_norms))
    print(format_report(report))
    return EXIT_OK if report.passed else EXIT_FAIL


def cmd_verify(args: argparse.Namespace) -> int:
    try:
        result = load_result(args.result)
        config = RunConfig.from_dict(result.config)
        report = build_report(result, config.alpha, config.epsilon)
    except (ConfigurationError, ValueError, KeyError) as exc:
        return _error(str(exc))
    args.no_vectors = False
    return _emit(report, result, args)


def cmd_emit_matrix(args: argparse.Namespace) -> int:
    try:
        m = make_completion_matrix(args.n)
        a = materialize(m)
        defect = orthogonality_defect(m)
    except (ValueError, MemoryError) as exc:
        return _error(str(exc))
    writer = csv.writer(sys.stdout, lineterminator="\n")
    for row in a:
        writer.writerow([f"{x:.17g}" for x in row])
    print(f"orthogonality defect: {defect:.3e}", file=sys.stderr)
    return EXIT_OK


def _max_difference(xs: Sequence[SparseL2Vector], ys: Sequence[SparseL2Vector]) -> float:
    worst = 0.0
    for x, y in zip(xs, ys):
        d = x - y
        if len(d):
            worst = max(worst, float(np.abs(d.values).max()))
    return worst


def bench(sizes: Sequence[int], repeat: int = 3) -> list[dict[str, float]]:
    """Time structured against naive application on reference-basis inputs.

    Raises ``VerificationError`` if the two disagree by more than 1e-12 in
    any coefficient.
    """
    rows = []
    for n in sizes:
        m = make_completion_matrix(n)
        block = [SparseL2Vector.basis(i) for i in range(n)]
        g = SparseL2Vector.basis(n)
        t_structured, t_naive = [], []
        for _ in range(max(1, repeat)):
            t0 = time.perf_counter()
            fast = apply_structured(m, block, g)
            t1 = time.perf_counter()
            slow = apply_naive(m, block, g)
            t2 = time.perf_counter()
            t_structured.append(t1 - t0)
            t_naive.append(t2 - t1)
            diff = _max_difference([*fast[0], fast[1]], [*slow[0], slow[1]])
            if diff > EQUIVALENCE_TOL:
                raise VerificationError(f"n={n}: structured and naive differ by {diff:.3e}")
            del slow
        ts, tn = min(t_structured), min(t_naive)
        rows.append({"n": n, "t_structured": ts, "t_naive": tn, "ratio": tn / ts if ts > 0 else float("inf")})
    return rows


def cmd_bench(args: argparse.Namespace) -> int:
    try:
        rows = bench(args.sizes, args.repeat)
    except VerificationError as exc:
        print(f"FAIL: {exc}", file=sys.stderr)
        return EXIT_FAIL
    except (ValueError, MemoryError) as exc:
        return _error(str(exc))
    print(f"{'n':>8} {'t_structured':>14} {'t_naive':>14} {'ratio':>10}")
    for r in rows:
        print(f"{r['n']:>8} {r['t_structured']:>14.6f} {r['t_naive']:>14.6f} {r['ratio']:>10.2f}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="basisforge", description=__doc__.split("\n\n")[0].strip())
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="run the completion and its verification suite")
    p.add_argument("--config", required=True)
    p.add_argument("--out", help="write the result and report as JSON")
    p.add_argument("--csv", help="write per-vector perturbation norms as CSV")
    p.add_argument("--no-vectors", action="store_true", help="omit vector payloads from the JSON")
    p.add_argument("--verify", action="store_true", help="check identities after every step")
    p.add_argument("--threads", type=int, default=1,
                   help="data-parallel apply within steps (capped by BASISFORGE_THREADS)")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("verify", help="re-run the verification suite on a saved result")
    p.add_argument("result")
    p.add_argument("--out")
    p.add_argument("--csv")
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("emit-matrix", help="print A_n as CSV")
    p.add_argument("n", type=int)
    p.set_defaults(func=cmd_emit_matrix)

    p = sub.add_parser("bench", help="time structured against naive application")
    p.add_argument("sizes", type=int, nargs="*")
    p.add_argument("--repeat", type=int, default=3)
    p.set_defaults(func=cmd_bench)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
