"""``factorize run | one | check``.

Exit codes: 0 pass, 1 residual above tolerance, 2 bad input.
"""

from __future__ import annotations

import argparse
import json
import sys

from .errors import FactorizeError
from .factorizer import factorize, verify_word
from .generators import Word
from .harness import SuiteConfig, run_suite
from .kernel import BlockOperator

EXIT_PASS, EXIT_RESIDUAL, EXIT_INPUT = 0, 1, 2


class InputError(Exception):
    pass


def _int_list(text: str) -> list[int]:
    try:
        return [int(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _load_json(path: str):
    try:
        with open(path, encoding="utf-8") as fh:
            return json.load(fh)
    except OSError as exc:
        raise InputError(f"{path}: {exc.strerror or exc}") from None
    except json.JSONDecodeError as exc:
        raise InputError(f"{path}: invalid JSON ({exc})") from None


def _load_operator(path: str) -> BlockOperator:
    data = _load_json(path)
    try:
        return BlockOperator.from_dict(data)
    except (KeyError, TypeError, ValueError) as exc:
        raise InputError(f"{path}: not a block operator ({exc})") from None


def _load_word(path: str) -> Word:
    data = _load_json(path)
    try:
        return Word.from_json(data)
    except (KeyError, TypeError, ValueError) as exc:
        raise InputError(f"{path}: not a word ({exc})") from None


def _write(path: str, text: str) -> None:
    try:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(text)
    except OSError as exc:
        raise InputError(f"cannot write {path}: {exc.strerror or exc}") from None


def cmd_run(args) -> int:
    fmt = args.format or ("csv" if args.out and args.out.endswith(".csv") else "json")
    cfg = SuiteConfig(
        seeds=args.seeds,
        dims=args.dims,
        window=args.window,
        tol=args.tol,
        out_path=args.out,
        format=fmt,
        include_fixed=not args.no_fixed,
        timings=args.timings,
    )
    try:
        report = run_suite(cfg)
    except ValueError as exc:
        raise InputError(str(exc)) from None
    except OSError as exc:
        raise InputError(str(exc)) from None
    s = report.summary
    print(
        f"cases={s['cases']} failures={s['failures']} stage_failures={s['stage_failures']} "
        f"max_residual={s['max_residual']:.3e} lengths={s['random_lengths']} "
        f"generator_counts={s['random_generator_counts']}"
    )
    if not args.out:
        sys.stdout.write(report.dumps_json() if fmt == "json" else report.dumps_csv())
    return EXIT_PASS if report.passed else EXIT_RESIDUAL


def cmd_one(args) -> int:
    U = _load_operator(args.input)
    try:
        word, trace = factorize(U, window=args.window, tol=args.tol)
    except FactorizeError as exc:
        raise InputError(str(exc)) from None
    _write(args.out, json.dumps(word.to_json(), indent=1) + "\n")
    if args.trace:
        _write(args.trace, trace.dumps() + "\n")
    print(f"length={len(word)} generators={word.generator_count} residual={trace.residual:.3e}")
    return EXIT_PASS if trace.residual <= args.tol else EXIT_RESIDUAL


def cmd_check(args) -> int:
    U = _load_operator(args.input)
    word = _load_word(args.word)
    K = args.window + 2 * U.reach()
    residual = verify_word(word, U, K)
    print(f"{residual:.17g}")
    return EXIT_PASS if residual <= args.tol else EXIT_RESIDUAL


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="factorize", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--window", type=int, default=64, help="window K (default 64)")
        p.add_argument("--tol", type=float, default=1e-8, help="residual tolerance (default 1e-8)")

    run = sub.add_parser("run", help="factor the seeded sweep and the fixed family")
    run.add_argument("--seeds", type=_int_list, default=[1, 2, 3, 4, 5])
    run.add_argument("--dims", type=_int_list, default=[2, 4, 8, 16, 32])
    run.add_argument("--out", help="report path; stdout when omitted")
    run.add_argument("--format", choices=("json", "csv"))
    run.add_argument("--no-fixed", action="store_true", help="skip the fixed family")
    run.add_argument("--timings", action="store_true", help="record wall time per case")
    common(run)
    run.set_defaults(func=cmd_run)

    one = sub.add_parser("one", help="factor one operator from JSON")
    one.add_argument("--input", required=True)
    one.add_argument("--out", required=True)
    one.add_argument("--trace", help="also write the pipeline trace")
    common(one)
    one.set_defaults(func=cmd_one)

    check = sub.add_parser("check", help="print the window residual of a word against an operator")
    check.add_argument("--word", required=True)
    check.add_argument("--input", required=True)
    common(check)
    check.set_defaults(func=cmd_check)
    return ap


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_INPUT if exc.code else EXIT_PASS
    try:
        return args.func(args)
    except InputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
