"""Command line entry point.

Exit codes: 0 success, 1 unreadable input (files, spec, arguments),
2 algorithm refusal, 3 failed self-check in ``verify``.
"""
from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from .adaptive import bicriteria_approx
from .core import ApproxReport, as_pnorm, residual_norm
from .enumeration import Exhaustive, Sampled, SubsetSearchConfig, best_subset
from .errors import LplraError, ParseError, RefusalError
from .io_bench import (
    ALGORITHMS,
    CSV_HEADER,
    BagOfWordsFile,
    DatasetSpec,
    MatrixMarketFile,
    format_row,
    parse_dataset,
    read_run_spec,
    run_experiment,
    write_matrix_market,
)
from .rank_reduction import reduce_rank, sketched_reduce
from .svd_baseline import truncated_svd

EXIT_OK, EXIT_PARSE, EXIT_REFUSED, EXIT_CHECK = 0, 1, 2, 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise ParseError(f"{self.prog}: {message}")


def _pval(text: str):
    try:
        return as_pnorm(text)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def _dataset(arg: str, kind: str | None) -> DatasetSpec:
    path = Path(arg)
    if path.exists():
        if kind == "bow" or (kind is None and path.name.startswith("docword")):
            return DatasetSpec(BagOfWordsFile(str(path)))
        return DatasetSpec(MatrixMarketFile(str(path)))
    if kind in ("mm", "bow") or arg.split()[0] not in ("mm", "bow", "sparse", "pm1", "planted", "intro"):
        raise ParseError(f"no such file: {arg}")
    return parse_dataset(arg)


def _factorize(args) -> int:
    a = _dataset(args.input, args.format).load()
    p, k, seed = args.p, args.k, args.seed
    if args.algo == "svd":
        _, fac = truncated_svd(a, k)
        rep = ApproxReport("svd", residual_norm(a, fac, p), 0.0, seed or 0, 0.0, p=p, k=k, columns_used=k)
    elif args.algo in ("exhaustive", "sampled"):
        strategy = Exhaustive() if args.algo == "exhaustive" else Sampled(args.trials, seed)
        fac, rep = best_subset(a, k, p, SubsetSearchConfig(strategy))
    else:
        fac, rep = bicriteria_approx(a, k, p, seed=seed)
        if args.algo == "reduce":
            fac, rep = reduce_rank(a, fac, min(k, fac.rank_budget), p, seed=seed)
        elif args.algo == "sketched":
            fac, rep = sketched_reduce(a, fac, min(k, fac.rank_budget), p, seed=seed)
    if args.out:
        np.savez(args.out, u=fac.u, v=fac.v)
    print(json.dumps(rep.as_dict(), default=str, indent=1))
    return EXIT_OK


def _bench(args) -> int:
    spec = read_run_spec(args.spec)
    if args.out:
        spec = replace(spec, output=args.out)
    rows = run_experiment(spec)
    if not spec.output:
        print(",".join(CSV_HEADER))
        for r in rows:
            print(format_row(r))
    bad = [r for r in rows if r["status"] != "ok"]
    for r in bad:
        print(f"{r['algorithm']} k={r['k']} seed={r['seed']}: {r['status']}", file=sys.stderr)
    return EXIT_OK


def _gen(args) -> int:
    text = " ".join(args.dataset)
    if args.seed is not None and "seed=" not in text and text.split()[0] in ("sparse", "pm1", "planted"):
        text += f" seed={args.seed}"
    a = parse_dataset(text).load()
    write_matrix_market(args.out, a, coordinate=not args.dense)
    print(f"wrote {a.shape[0]} x {a.shape[1]} matrix to {args.out}")
    return EXIT_OK


def _verify(args) -> int:
    from .verify import run_checks

    def show(chk):
        print(f"{'PASS' if chk.passed else 'FAIL'}  {chk.name}: {chk.detail} ({chk.elapsed:.2f} s)")

    results = run_checks(show)
    return EXIT_OK if all(c.passed for c in results) else EXIT_CHECK


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="lplra", description="Entrywise lp low-rank approximation.")
    sub = ap.add_subparsers(dest="command", required=True, parser_class=_Parser)

    f = sub.add_parser("factorize", help="factorize one dataset with one algorithm")
    f.add_argument("input", help="Matrix Market / docword file, or a dataset spec such as 'pm1 n=20 m=30'")
    f.add_argument("--format", choices=("mm", "bow"), default=None)
    f.add_argument("--algo", choices=ALGORITHMS, default="sampled")
    f.add_argument("--p", type=_pval, default=as_pnorm(1))
    f.add_argument("--k", type=int, required=True)
    f.add_argument("--seed", type=int, default=None)
    f.add_argument("--trials", type=int, default=2000)
    f.add_argument("--out", help="write factors u, v to this .npz")
    f.set_defaults(func=_factorize)

    b = sub.add_parser("bench", help="run a RunSpec file")
    b.add_argument("spec")
    b.add_argument("--out", help="CSV path (overrides the RunSpec output)")
    b.set_defaults(func=_bench)

    g = sub.add_parser("gen", help="write a synthetic dataset as Matrix Market")
    g.add_argument("dataset", nargs="+", help="e.g. sparse n=20 m=30 density=0.3")
    g.add_argument("--seed", type=int, default=None)
    g.add_argument("--dense", action="store_true", help="array format instead of coordinate")
    g.add_argument("--out", required=True)
    g.set_defaults(func=_gen)

    v = sub.add_parser("verify", help="run the oracle self-checks")
    v.set_defaults(func=_verify)
    return ap


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        return args.func(args)
    except ParseError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PARSE
    except (FileNotFoundError, IsADirectoryError, UnicodeDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PARSE
    except RefusalError as exc:
        print(f"refused: {exc}", file=sys.stderr)
        return EXIT_REFUSED
    except (LplraError, ValueError) as exc:
        print(f"refused: {exc}", file=sys.stderr)
        return EXIT_REFUSED


if __name__ == "__main__":
    sys.exit(main())
