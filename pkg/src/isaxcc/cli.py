"""Command-line driver: ``isax-cc compile`` and ``isax-cc dma-plan``.

Exit codes: 0 success, 1 input error, 2 differential-check failure,
3 external-rewrite budget exhausted (best-effort output is still written).
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from typing import Optional

from .dma import DmaError, LatencyModel, plan
from .egraph import SaturationLimits
from .ir import ParseError, parse, print_function
from .ir.verifier import VerifyError
from .isax import IsaxError
from .pipeline import PipelineConfig, compile, load_isax_text
from .rewrite import RuleFileError, parse_rules

EXIT_OK, EXIT_INPUT, EXIT_DIFF, EXIT_BUDGET = 0, 1, 2, 3

log = logging.getLogger("isaxcc")


def _read(path: str) -> str:
    with open(path) as fh:
        return fh.read()


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="isax-cc", description="Offload application loops to custom ISA extensions.")
    ap.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = ap.add_subparsers(dest="command", required=True)

    c = sub.add_parser("compile", help="rewrite an application to use ISAX calls")
    c.add_argument("--app", required=True, help="application IR file")
    c.add_argument("--isax", action="append", required=True, help="ISAX description file (repeatable)")
    c.add_argument("--out", help="output IR file (default: stdout)")
    c.add_argument("--report", help="JSON report file")
    c.add_argument("--dump-egraph", metavar="DIR", help="dump the e-graph after each step")
    c.add_argument("--dump-format", choices=("json", "dot", "both"), default="json")
    c.add_argument("--check", dest="check", action="store_true", default=True, help="differential check (default)")
    c.add_argument("--no-check", dest="check", action="store_false")
    c.add_argument("--seed", type=int, default=0)
    c.add_argument("--trials", type=int, default=100)
    c.add_argument("--rules", action="append", default=[], help="extra rewrite rule file (repeatable)")
    c.add_argument("--budget", type=int, default=3, help="external rewrite budget")
    c.add_argument("--max-iterations", type=int, default=30)
    c.add_argument("--max-nodes", type=int, default=50_000)
    c.add_argument("--explain", action="store_true", help="print per-candidate validation results")

    d = sub.add_parser("dma-plan", help="optimal burst/single-shot partition of a transfer")
    d.add_argument("--bytes", type=int, required=True)
    d.add_argument("--t-ss", type=int, default=3)
    d.add_argument("--bus", type=int, default=8)
    d.add_argument("--cacheline", type=int, default=64)
    d.add_argument("--direction", choices=("load", "store"), default="load")
    d.add_argument("--d-ss", type=int, default=None, help="bytes per single-shot (default: bus width)")
    return ap


def _compile(args) -> int:
    try:
        app = parse(_read(args.app))
        isaxes = [load_isax_text(_read(p)) for p in args.isax]
        extra = [r for p in args.rules for r in parse_rules(_read(p))]
        cfg = PipelineConfig(
            limits=SaturationLimits(max_iterations=args.max_iterations, max_nodes=args.max_nodes),
            external_budget=args.budget,
            extra_rules=extra,
            dump_dir=args.dump_egraph,
            dump_format=args.dump_format,
            check=args.check,
            seed=args.seed,
            trials=args.trials,
        )
    except (OSError, ParseError, VerifyError, IsaxError, RuleFileError, ValueError) as e:
        print(f"isax-cc: error: {e}", file=sys.stderr)
        return EXIT_INPUT

    out, report = compile(app, isaxes, cfg)
    text = print_function(out)
    if not text.endswith("\n"):
        text += "\n"
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    if args.report:
        with open(args.report, "w") as fh:
            json.dump(report.to_dict(), fh, indent=2)
    if args.explain:
        for o in report.isaxes:
            print(f"[{o.name}] plan={o.plan} candidates={o.candidates} accepted={o.accepted}", file=sys.stderr)
            for e in o.explain:
                print("  " + json.dumps(e), file=sys.stderr)
    log.info("seed=%d differential=%s", report.seed, report.differential)

    if report.differential == "fail":
        print(f"isax-cc: differential check failed: {report.differential_detail}", file=sys.stderr)
        return EXIT_DIFF
    if report.budget_exhausted:
        print("isax-cc: external rewrite budget exhausted; emitted output without ISAX calls", file=sys.stderr)
        return EXIT_BUDGET
    return EXIT_OK


def _dma_plan(args) -> int:
    try:
        m = LatencyModel(
            t_ss=args.t_ss, bus_width_bytes=args.bus, cacheline_bytes=args.cacheline, direction=args.direction
        )
        result = plan(args.bytes, m, args.d_ss)
    except DmaError as e:
        print(f"isax-cc: error: {e}", file=sys.stderr)
        return EXIT_INPUT
    print(json.dumps(result))
    return EXIT_OK


def main(argv: Optional[list[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(name)s: %(message)s")
    if args.command == "compile":
        return _compile(args)
    return _dma_plan(args)


if __name__ == "__main__":
    sys.exit(main())
