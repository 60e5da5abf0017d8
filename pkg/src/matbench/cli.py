"""Command line front end: run, batch, report, timings.

Exit codes: 0 on success, 1 when any test in the invocation failed, 2 for
an invalid invocation. MATBENCH_SEED supplies the default seed when --seed
is absent.
"""

from __future__ import annotations

import argparse
import os
import shlex
import sys
from pathlib import Path

from . import harness
from .errors import MatbenchError


class _CliArgumentError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    # raise instead of exiting so plan-file lines surface clean errors
    def error(self, message):
        raise _CliArgumentError(message)


def _default_seed() -> int:
    raw = os.environ.get("MATBENCH_SEED")
    if raw is None:
        return 0
    try:
        return int(raw)
    except ValueError as err:
        raise _CliArgumentError(f"MATBENCH_SEED must be an integer, got {raw!r}") from err


def _build_run_parser(prog: str = "matbench run") -> _Parser:
    parser = _Parser(prog=prog, add_help=False)
    parser.add_argument("--arch")
    parser.add_argument("--dataset", required=True)
    parser.add_argument("--category", required=True)
    parser.add_argument("--test-name", required=True)
    parser.add_argument("--seed", type=int, default=None)
    parser.add_argument("--c", type=float, default=10.0)
    parser.add_argument("--no-normalize", action="store_true")
    parser.add_argument("--patch", default=None, help="CX,CY,S center and scale")
    parser.add_argument("--features-in", default=None)
    parser.add_argument("--out", default="runs")
    return parser


def _parse_patch(raw: str) -> tuple[int, int, float]:
    parts = raw.split(",")
    if len(parts) != 3:
        raise _CliArgumentError(f"--patch wants CX,CY,S, got {raw!r}")
    try:
        return int(parts[0]), int(parts[1]), float(parts[2])
    except ValueError as err:
        raise _CliArgumentError(f"bad --patch value {raw!r}") from err


def _spec_from_args(args: argparse.Namespace) -> harness.TestSpec:
    seed = args.seed if args.seed is not None else _default_seed()
    patch = _parse_patch(args.patch) if args.patch else None
    try:
        return harness.TestSpec(
            dataset=args.dataset,
            category=args.category,
            test_name=args.test_name,
            arch=args.arch,
            features_in=args.features_in,
            seed=seed,
            patch=patch,
            normalize=not args.no_normalize,
            svm_c=args.c,
        )
    except ValueError as err:
        raise _CliArgumentError(str(err)) from err


def _write_outputs(entries, out_dir: Path) -> None:
    for entry in entries:
        if not entry.ok:
            continue
        test_dir = out_dir / entry.spec.test_name
        harness.emit_plot_data(entry.report, test_dir)
        harness.write_result_csv(entry, test_dir / "result.csv")


def _report_entries(entries) -> int:
    failures = 0
    for entry in entries:
        if entry.ok:
            report = entry.report
            print(
                f"{entry.spec.test_name}: train_ap={report.train_ap.ap:.4f} "
                f"test_ap={report.test_ap.ap:.4f} minutes={report.wall_time:.4f}"
            )
        else:
            failures += 1
            print(f"{entry.spec.test_name}: FAILED {entry.error}", file=sys.stderr)
    return failures


def _cmd_run(argv: list[str]) -> int:
    args = _build_run_parser().parse_args(argv)
    spec = _spec_from_args(args)
    entries, _ = harness.run_batch([spec], parallelism=1)
    _write_outputs(entries, Path(args.out))
    return 1 if _report_entries(entries) else 0


def _cmd_batch(argv: list[str]) -> int:
    parser = _Parser(prog="matbench batch", add_help=False)
    parser.add_argument("--plan", required=True)
    parser.add_argument("--parallelism", type=int, default=1)
    parser.add_argument("--out", default="runs")
    args = parser.parse_args(argv)
    if args.parallelism < 1:
        raise _CliArgumentError("--parallelism must be >= 1")

    run_parser = _build_run_parser(prog="plan line")
    specs = []
    try:
        plan_text = Path(args.plan).read_text(encoding="utf-8")
    except OSError as err:
        raise _CliArgumentError(f"cannot read plan file: {err}") from err
    for lineno, raw in enumerate(plan_text.splitlines(), start=1):
        tokens = shlex.split(raw, comments=True)
        if not tokens:
            continue
        if tokens[0] != "run":
            raise _CliArgumentError(f"plan line {lineno}: expected 'run ...'")
        try:
            specs.append(_spec_from_args(run_parser.parse_args(tokens[1:])))
        except _CliArgumentError as err:
            raise _CliArgumentError(f"plan line {lineno}: {err}") from err
    if not specs:
        raise _CliArgumentError("plan file holds no tests")

    entries, timing = harness.run_batch(specs, parallelism=args.parallelism)
    out_dir = Path(args.out)
    _write_outputs(entries, out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "timings.csv").write_text(timing.to_csv(), encoding="utf-8")
    return 1 if _report_entries(entries) else 0


def _collect_results(in_dir: str):
    root = Path(in_dir)
    results = []
    timing_rows = []
    for path in sorted(root.glob("*/result.csv")):
        result, timing_row = harness.read_result_csv(path)
        results.append(result)
        timing_rows.append(timing_row)
    return results, timing_rows


def _cmd_report(argv: list[str]) -> int:
    parser = _Parser(prog="matbench report", add_help=False)
    parser.add_argument(
        "--layout",
        required=True,
        choices=["per-category-table", "map-summary", "common-ground"],
    )
    parser.add_argument("--in", dest="in_dir", required=True)
    args = parser.parse_args(argv)
    results, _ = _collect_results(args.in_dir)
    if not results:
        raise _CliArgumentError(f"no result.csv files under {args.in_dir}")
    sys.stdout.write(harness.emit_report(results, args.layout))
    return 0


def _cmd_timings(argv: list[str]) -> int:
    parser = _Parser(prog="matbench timings", add_help=False)
    parser.add_argument("--in", dest="in_dir", required=True)
    args = parser.parse_args(argv)
    _, timing_rows = _collect_results(args.in_dir)
    if not timing_rows:
        raise _CliArgumentError(f"no result.csv files under {args.in_dir}")
    table = harness.TimingTable(rows=timing_rows)
    sys.stdout.write(table.to_csv())
    return 0


_COMMANDS = {
    "run": _cmd_run,
    "batch": _cmd_batch,
    "report": _cmd_report,
    "timings": _cmd_timings,
}

_USAGE = """usage: matbench <command> [options]

commands:
  run      run one test (--arch or --features-in, --dataset, --category, --test-name)
  batch    run a plan file of tests (--plan FILE [--parallelism P] [--out DIR])
  report   aggregate results (--layout {per-category-table,map-summary,common-ground} --in DIR)
  timings  aggregate wall times (--in DIR)
"""


def main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    if not argv or argv[0] in ("-h", "--help"):
        sys.stdout.write(_USAGE)
        return 0 if argv else 2
    command = argv[0]
    handler = _COMMANDS.get(command)
    if handler is None:
        print(f"unknown command {command!r}", file=sys.stderr)
        sys.stdout.write(_USAGE)
        return 2
    try:
        return handler(argv[1:])
    except _CliArgumentError as err:
        print(f"error: {err}", file=sys.stderr)
        return 2
    except MatbenchError as err:
        print(f"error: {err}", file=sys.stderr)
        return 1
