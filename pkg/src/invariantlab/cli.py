"""Command-line entry point.

Subcommands:

* ``run --config <path> [--out <dir>]`` — execute the scenario and
  write the four CSV artifacts (``--out`` overrides the configured
  output directory).
* ``verify --config <path>`` — run the verification battery and print
  one line per check plus an overall line.
* ``sweep --config <path> --param <key> --values <v1,v2,...>`` — rerun
  the scenario once per value of a scalar config key and write an
  aggregated ``sweep.csv`` next to the other artifacts.
* ``schema`` — print the full config schema with types and defaults.

Exit codes: 0 success / all checks pass, 1 check failure, 2
configuration error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import os
import sys

from .errors import InvariantLabError
from .runner import run_scenario, sweep, verify_scenario
from .scenario import load_scenario, schema_text


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="invariantlab",
        description="Dissipative-oscillator conserved-observable laboratory")
    sub = parser.add_subparsers(dest="command", required=True)

    run_p = sub.add_parser("run", help="execute a scenario and write CSVs")
    run_p.add_argument("--config", required=True, help="scenario file")
    run_p.add_argument("--out", default=None,
                       help="output directory (overrides outputs.directory)")

    ver_p = sub.add_parser("verify", help="run the verification battery")
    ver_p.add_argument("--config", required=True, help="scenario file")

    sw_p = sub.add_parser("sweep", help="rerun over a list of values")
    sw_p.add_argument("--config", required=True, help="scenario file")
    sw_p.add_argument("--param", required=True,
                      help="dotted config key, e.g. kappa.value")
    sw_p.add_argument("--values", required=True,
                      help="comma-separated values, e.g. 0,0.05,0.1")

    sub.add_parser("schema", help="print the config schema")
    return parser


def _cmd_run(args) -> int:
    s = load_scenario(args.config)
    result = run_scenario(s, out_dir=args.out)
    for name in result.files:
        print(os.path.join(result.out_dir, name))
    print(f"max relative drift of the conserved expectation: "
          f"{result.max_rel_drift:.6g}")
    for w in result.warnings:
        print(f"warning: {w}", file=sys.stderr)
    print(f"wall time {result.wall_time:.2f} s", file=sys.stderr)
    return 0


def _cmd_verify(args) -> int:
    s = load_scenario(args.config)
    report = verify_scenario(s)
    for line in report.format_lines():
        print(line)
    return 0 if report.overall else 1


def _cmd_sweep(args) -> int:
    s = load_scenario(args.config)
    values = [v.strip() for v in args.values.split(",") if v.strip()]
    os.makedirs(s.out_dir, exist_ok=True)
    out_path = os.path.join(s.out_dir, "sweep.csv")
    rows = sweep(s, args.param, values, out_path)
    print(out_path)
    print(f"{len(rows)} rows for {args.param} = {', '.join(values)}")
    return 0


def main(argv: list[str] | None = None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        if args.command == "run":
            return _cmd_run(args)
        if args.command == "verify":
            return _cmd_verify(args)
        if args.command == "sweep":
            return _cmd_sweep(args)
        print(schema_text(), end="")
        return 0
    except InvariantLabError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code


if __name__ == "__main__":
    sys.exit(main())
