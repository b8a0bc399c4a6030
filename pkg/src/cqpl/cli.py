"""Command-line front end.

Subcommands: run (execute a program), check (static analysis only),
semantics (print the extracted Kraus trace), equiv (compare two programs).
Reads from stdin when no input file is given. Exit codes: 0 success,
1 diagnostics, 2 runtime failure or deadlock, 3 usage error.
"""
from __future__ import annotations

import argparse
import sys

from .errors import CqplError, ExtractError, LexError, ParseError
from .parser import parse
from .runtime import deadlock_message, run_program
from .semantics import extract_semantics, programs_equiv, render_trace
from .typecheck import check_program, comm_balance_check

EXIT_OK = 0
EXIT_DIAGNOSTICS = 1
EXIT_RUNTIME = 2
EXIT_USAGE = 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        sys.stderr.write(f"{self.prog}: error: {message}\n")
        sys.exit(EXIT_USAGE)


def _build_parser() -> _Parser:
    parser = _Parser(prog="cqpl",
                     description="Compile, run and analyse cQPL programs.")
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p):
        p.add_argument("--seed", type=int, default=0,
                       help="random seed for measurements and scheduling "
                            "(default: 0)")
        p.add_argument("--qheap", type=int, default=200,
                       help="size of quantum heap (default: 200 qbits)")
        p.add_argument("--sim-cap", type=int, default=24,
                       help="dense simulation cap in qbits (default: 24)")
        p.add_argument("--interleave", choices=("roundrobin", "random"),
                       default="roundrobin",
                       help="module scheduling order (default: roundrobin)")
        p.add_argument("--trace", action="store_true",
                       help="prefix output lines with the emitting module")
        p.add_argument("--recursion-limit", type=int, default=4096,
                       help="procedure call depth limit (default: 4096)")

    p_run = sub.add_parser("run", help="type-check and execute a program")
    p_run.add_argument("input", nargs="?", help="input file (stdin if absent)")
    add_common(p_run)

    p_check = sub.add_parser("check", help="run syntax and type analysis only")
    p_check.add_argument("input", nargs="?", help="input file (stdin if absent)")

    p_sem = sub.add_parser("semantics",
                           help="print the extracted Kraus trace")
    p_sem.add_argument("input", nargs="?", help="input file (stdin if absent)")

    p_eq = sub.add_parser("equiv", help="compare two programs' denotations")
    p_eq.add_argument("first")
    p_eq.add_argument("second")
    p_eq.add_argument("--mode", choices=("exact", "reorder", "channel"),
                      default="exact")
    p_eq.add_argument("--max-qbits", type=int, default=6,
                      help="qbit bound for channel-mode comparison "
                           "(default: 6)")
    return parser


def _read_source(path: str | None) -> tuple[str, str]:
    if path is None:
        return sys.stdin.read(), "<stdin>"
    with open(path, "r", encoding="utf-8") as handle:
        return handle.read(), path


def _compile(path: str | None):
    source, filename = _read_source(path)
    program = parse(source)
    checked = check_program(program, filename=filename)
    return checked, filename


def main(argv: list[str] | None = None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        return _dispatch(args)
    except (LexError, ParseError) as exc:
        sys.stderr.write(f"{exc}\n")
        return EXIT_DIAGNOSTICS
    except ExtractError as exc:
        sys.stderr.write(f"{exc}\n")
        return EXIT_DIAGNOSTICS
    except OSError as exc:
        sys.stderr.write(f"cqpl: {exc}\n")
        return EXIT_USAGE
    except CqplError as exc:
        sys.stderr.write(f"{exc}\n")
        return EXIT_RUNTIME


def _dispatch(args) -> int:
    if args.command == "run":
        checked, _ = _compile(args.input)
        if not checked.ok:
            for diag in checked.diagnostics:
                sys.stderr.write(diag.render() + "\n")
            return EXIT_DIAGNOSTICS
        if args.qheap < 1 or args.sim_cap < 1:
            sys.stderr.write("cqpl: --qheap and --sim-cap must be >= 1\n")
            return EXIT_USAGE
        result = run_program(checked, seed=args.seed, qheap=args.qheap,
                             sim_cap=args.sim_cap, interleave=args.interleave,
                             trace=args.trace,
                             recursion_limit=args.recursion_limit,
                             stream=sys.stdout)
        if result.failure is not None:
            sys.stderr.write(str(result.failure) + "\n")
            return EXIT_RUNTIME
        if result.deadlocked:
            sys.stderr.write(deadlock_message(result) + "\n")
            return EXIT_RUNTIME
        return EXIT_OK

    if args.command == "check":
        checked, filename = _compile(args.input)
        for diag in checked.diagnostics:
            sys.stderr.write(diag.render() + "\n")
        if checked.ok:
            balance = comm_balance_check(checked.program, filename=filename)
            for warning in balance.warnings:
                sys.stderr.write(warning.render() + "\n")
        return EXIT_OK if checked.ok else EXIT_DIAGNOSTICS

    if args.command == "semantics":
        checked, _ = _compile(args.input)
        if not checked.ok:
            for diag in checked.diagnostics:
                sys.stderr.write(diag.render() + "\n")
            return EXIT_DIAGNOSTICS
        sys.stdout.write(render_trace(extract_semantics(checked)))
        return EXIT_OK

    if args.command == "equiv":
        first, _ = _compile(args.first)
        second, _ = _compile(args.second)
        bad = [d for cp in (first, second) for d in cp.diagnostics
               if d.severity == "error"]
        if bad:
            for diag in bad:
                sys.stderr.write(diag.render() + "\n")
            return EXIT_DIAGNOSTICS
        verdict = programs_equiv(first, second, mode=args.mode,
                                 max_qbits=args.max_qbits)
        sys.stdout.write("true\n" if verdict else "false\n")
        return EXIT_OK

    raise AssertionError(f"unhandled command {args.command!r}")


if __name__ == "__main__":
    sys.exit(main())
