"""Command-line entry point: ``gcbridge run|fuzz|demo``."""

from __future__ import annotations

import argparse
import sys
from typing import List, Optional

from gcbridge.errors import ParseError
from gcbridge.monitor import mem_debug_from_env
from gcbridge.scenario.demo import DEMO_SCRIPT
from gcbridge.scenario.executor import RunReport, execute
from gcbridge.scenario.fuzz import fuzz
from gcbridge.scenario.parser import parse


def _emit(report: RunReport, fmt: str) -> None:
    if fmt == "json":
        print(report.to_json())
    else:
        text = report.text()
        if text:
            print(text)


def _run_text(text: str, mem_debug: bool, fmt: str, audit: bool) -> int:
    try:
        commands = parse(text)
    except ParseError as exc:
        print(f"parse error: {exc}", file=sys.stderr)
        return 2
    report = execute(commands, mem_debug=mem_debug, audit=audit, check_safety=True)
    _emit(report, fmt)
    return report.exit_code


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="gcbridge", description=__doc__)
    sub = ap.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="execute a scenario script")
    run.add_argument("file", help="scenario file, or - for stdin")
    run.add_argument("--mem-debug", action="store_true",
                     help="enable native allocation monitoring (also GCBRIDGE_MEM_DEBUG=1)")
    run.add_argument("--format", choices=("text", "json"), default="text")
    run.add_argument("--audit", action="store_true", help="check refcount accounting after every command")

    fz = sub.add_parser("fuzz", help="run a seeded random campaign")
    fz.add_argument("--seed", type=int, default=1)
    fz.add_argument("--steps", type=int, default=10_000)
    fz.add_argument("--no-silent", action="store_true", help="disable unreported mutations")
    fz.add_argument("--format", choices=("text", "json"), default="text")

    demo = sub.add_parser("demo", help="print and run the built-in demonstration")
    demo.add_argument("--format", choices=("text", "json"), default="text")
    return ap


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "run":
        if args.file == "-":
            text = sys.stdin.read()
        else:
            with open(args.file, encoding="utf-8") as fh:
                text = fh.read()
        return _run_text(text, args.mem_debug or mem_debug_from_env(), args.format, args.audit)
    if args.command == "demo":
        if args.format == "text":
            print(DEMO_SCRIPT.rstrip("\n"))
            print("---")
        return _run_text(DEMO_SCRIPT, True, args.format, True)
    if args.steps < 1:
        print("--steps must be at least 1", file=sys.stderr)
        return 2
    report = fuzz(args.seed, args.steps, silent=not args.no_silent)
    if args.format == "json":
        _emit(report, "json")
    else:
        steps = len(report.results)
        verdict = "ok" if report.ok else "FAILED"
        print(f"seed {args.seed}: {steps} steps, {verdict}")
        text = report.text()
        if not report.ok and text:
            print(text)
    return report.exit_code


if __name__ == "__main__":
    sys.exit(main())
