"""Command line entry point.

Verbs: validate, run, counterexample, report-diff. The default seed comes
from --seed, then the ROBOOST_SEED environment variable, then the scenario
file.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

from .errors import ScenarioError
from .harness import (
    PROCEDURES,
    build_counterexample,
    load_scenario_file,
    report_diff,
    run_scenario,
    write_csv,
    write_report,
)


def _seed_from(args) -> int | None:
    if args.seed is not None:
        return args.seed
    env = os.environ.get("ROBOOST_SEED")
    return int(env) if env else None


def _cmd_validate(args) -> int:
    try:
        scenario = load_scenario_file(args.scenario)
    except ScenarioError as exc:
        print(f"invalid: {exc}", file=sys.stderr)
        return 1
    print(f"ok: {scenario.name} ({scenario.family}), {scenario.space.point_count} points")
    return 0


def _cmd_run(args) -> int:
    scenario = load_scenario_file(args.scenario)
    report = run_scenario(
        scenario,
        args.procedure,
        args.trials,
        _seed_from(args),
        workers=args.workers,
    )
    if args.out:
        write_report(report, args.out)
        print(f"report written to {args.out}")
    else:
        sys.stdout.write(report.dumps())
    if args.csv:
        write_csv(report, args.csv)
        print(f"per-trial rows written to {args.csv}")
    return 0 if report.passed else 1


def _cmd_counterexample(args) -> int:
    masses = None
    if args.masses and args.masses != "uniform":
        masses = [float(v) for v in args.masses.split(",")]
    scenario = build_counterexample(args.k, masses=masses, seed=_seed_from(args) or 0)
    doc = json.dumps(scenario.to_json(), sort_keys=True, indent=2) + "\n"
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(doc)
        print(f"scenario written to {args.out}")
    else:
        sys.stdout.write(doc)
    return 0


def _cmd_report_diff(args) -> int:
    with open(args.first, "r", encoding="utf-8") as fh:
        a = json.load(fh)
    with open(args.second, "r", encoding="utf-8") as fh:
        b = json.load(fh)
    diffs = report_diff(a, b)
    for line in diffs:
        print(line)
    if not diffs:
        print("reports are identical")
    return 0 if not diffs else 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="roboost", description="Exact robustness-boosting laboratory"
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("validate", help="check a scenario file")
    p.add_argument("--scenario", required=True)
    p.set_defaults(fn=_cmd_validate)

    p = sub.add_parser("run", help="run a procedure over seeded trials")
    p.add_argument("--scenario", required=True)
    p.add_argument("--procedure", required=True, choices=PROCEDURES)
    p.add_argument("--trials", type=int, default=1)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", default=None, help="report JSON path (stdout if omitted)")
    p.add_argument("--csv", default=None, help="optional flat per-round CSV")
    p.add_argument("--workers", type=int, default=1)
    p.set_defaults(fn=_cmd_run)

    p = sub.add_parser("counterexample", help="emit a gadget-family scenario")
    p.add_argument("--k", type=int, required=True, help="gadget count")
    p.add_argument("--masses", default="uniform", help="comma list or 'uniform'")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", default=None)
    p.set_defaults(fn=_cmd_counterexample)

    p = sub.add_parser("report-diff", help="compare two report files")
    p.add_argument("first")
    p.add_argument("second")
    p.set_defaults(fn=_cmd_report_diff)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.fn(args)


if __name__ == "__main__":
    raise SystemExit(main())
