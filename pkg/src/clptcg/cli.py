"""Command-line interface.

Two subcommands:

- ``compile``: lower a source file to the textual clause form.
- ``tcg``: generate a test suite for one entry point, replay every case
  as a built-in oracle, and report coverage.

Exit codes: 0 success, 1 diagnosable input problem, 2 internal error.
"""

from __future__ import annotations

import argparse
import json
import re
import sys

from .harness import (
    HarnessError,
    format_text_report,
    generate_suite,
    parse_precondition,
    suite_to_json,
)
from .ir import IrSyntaxError, parse_ir, print_program, validate
from .minioo import SourceError, compile_source


def _load_program(path: str):
    with open(path, "r", encoding="utf-8") as f:
        text = f.read()
    if path.endswith(".ir"):
        return parse_ir(text)
    return compile_source(text)


def _parse_bounds(spec: str) -> tuple:
    m = re.fullmatch(r"(-?\d+)\.\.(-?\d+)", spec)
    if not m or int(m.group(1)) > int(m.group(2)):
        raise HarnessError(f"bad bounds {spec!r}; expected LO..HI")
    return int(m.group(1)), int(m.group(2))


def cmd_compile(args) -> int:
    program = _load_program(args.source)
    issues = validate(program)
    for issue in issues:
        print(f"warning: {issue}", file=sys.stderr)
    text = print_program(program)
    if args.output:
        with open(args.output, "w", encoding="utf-8") as f:
            f.write(text)
    else:
        sys.stdout.write(text)
    return 0


def cmd_tcg(args) -> int:
    program = _load_program(args.source)
    pre = None
    if args.pre:
        with open(args.pre, "r", encoding="utf-8") as f:
            pre = parse_precondition(f.read())
    suite = generate_suite(
        program,
        args.entry,
        args.criterion,
        aliasing=args.aliasing == "on",
        bounds=_parse_bounds(args.bounds),
        precondition=pre,
    )
    if args.out:
        with open(args.out, "w", encoding="utf-8") as f:
            json.dump(suite_to_json(suite), f, indent=2)
            f.write("\n")
    if args.report == "json":
        json.dump(suite_to_json(suite), sys.stdout, indent=2)
        sys.stdout.write("\n")
    else:
        sys.stdout.write(format_text_report(suite, program.entries[args.entry]))
    if suite.replay_failures:
        for cid, detail in suite.replay_failures:
            print(f"error: case {cid} failed replay: {detail}", file=sys.stderr)
        return 1
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="clptcg")
    sub = p.add_subparsers(dest="command", required=True)

    c = sub.add_parser("compile", help="lower a source file to clause form")
    c.add_argument("source", help=".moo source (or .ir, echoed back)")
    c.add_argument("-o", "--output", help="write the clause text here")
    c.set_defaults(func=cmd_compile)

    t = sub.add_parser("tcg", help="generate and replay a test suite")
    t.add_argument("source", help=".moo source or .ir clause file")
    t.add_argument("--entry", required=True, help="entry point, Class.method")
    t.add_argument(
        "--criterion", default="block-k:2", help="block-k:<K> or depth-k:<K>"
    )
    t.add_argument("--aliasing", choices=("on", "off"), default="off")
    t.add_argument("--bounds", default="-8..8", help="integer domain, LO..HI")
    t.add_argument("--pre", help="precondition file")
    t.add_argument("--out", help="write the suite as JSON here")
    t.add_argument("--report", choices=("text", "json"), default="text")
    t.set_defaults(func=cmd_tcg)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (SourceError, IrSyntaxError, HarnessError, FileNotFoundError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    except Exception as e:  # pragma: no cover - defensive
        print(f"internal error: {type(e).__name__}: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
