"""Command-line front end: run, sweep, verify and list-scenarios."""

import argparse
import csv
import json
import logging
import os
import sys
import time
from typing import Optional, Sequence

from sea_smc.analysis import compute_metrics
from sea_smc.errors import DivergenceError, ScenarioError
from sea_smc.scenario import (
    RECORDED_SCENARIO,
    ScenarioSpec,
    dump_scenario,
    list_scenarios,
    load_recorded_run,
    load_scenario,
    parse_override,
)
from sea_smc.sim import save_trace
from sea_smc.verify import CHECKS, run_checks

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_FAILED = 1
EXIT_INVALID = 2
EXIT_DIVERGED = 3

SWEEP_COLUMNS = (
    "value",
    "status",
    "rmse",
    "chattering",
    "reaching_time",
    "reaching_passed",
    "lyapunov_violations",
    "estimation_error",
    "message",
)


def _overrides(pairs: Optional[Sequence[str]]) -> dict[str, Optional[str]]:
    return dict(parse_override(p) for p in pairs or [])


def _load(args: argparse.Namespace, extra: Optional[dict[str, Optional[str]]] = None) -> ScenarioSpec:
    overrides = _overrides(args.set)
    overrides.update(extra or {})
    return load_scenario(args.scenario, overrides, seed=args.seed, dt=args.dt, duration=args.duration)


def _run_one(spec: ScenarioSpec, out_dir: str, start: float) -> dict:
    """Runs a scenario and writes trace.csv, scenario.scenario and summary.json into out_dir.

    The metrics are computed from the files just written, so reanalyzing the
    saved trace reproduces summary.json.
    """
    os.makedirs(out_dir, exist_ok=True)
    began = time.perf_counter()
    trace = spec.run()
    runtime = time.perf_counter() - began
    trace_path = os.path.join(out_dir, "trace.csv")
    scenario_path = os.path.join(out_dir, RECORDED_SCENARIO)
    save_trace(trace, trace_path)
    with open(scenario_path, "w") as f:
        f.write(dump_scenario(spec))
    report = compute_metrics(load_recorded_run(trace_path, scenario_path), window=(start, None), mu=spec.mu)
    summary = {
        "name": spec.name,
        "mode": spec.mode,
        "seed": spec.sim.rng_seed,
        "dt": spec.sim.dt,
        "duration": spec.sim.duration,
        "samples": len(trace),
        "runtime": runtime,
        "metrics": report.to_dict(),
    }
    with open(os.path.join(out_dir, "summary.json"), "w") as f:
        json.dump(summary, f, indent=2)
    return summary


def cmd_run(args: argparse.Namespace) -> int:
    spec = _load(args)
    summary = _run_one(spec, args.out, args.window_start)
    metrics = summary["metrics"]
    print(f"{spec.name}: RMSE {metrics['rmse_tracking']:.6g}, chattering {metrics['chattering_index']:.6g} N.m/s")
    print(f"Wrote {os.path.join(args.out, 'trace.csv')}")
    return EXIT_OK


def cmd_sweep(args: argparse.Namespace) -> int:
    # Validate every value before the first run
    specs = [(value, _load(args, {args.parameter: value})) for value in args.values]

    os.makedirs(args.out, exist_ok=True)
    rows = []
    for value, spec in specs:
        row = dict.fromkeys(SWEEP_COLUMNS, "")
        row["value"] = value
        try:
            summary = _run_one(spec, os.path.join(args.out, f"{args.parameter}={value}"), args.window_start)
        except DivergenceError as e:
            logger.error(f"Run with {args.parameter}={value} diverged: {e}")
            row.update(status="diverged", message=str(e))
            rows.append(row)
            continue
        metrics = summary["metrics"]
        row.update(
            status="ok",
            rmse=f"{metrics['rmse_tracking']:.9g}",
            chattering=f"{metrics['chattering_index']:.9g}",
            reaching_time=f"{metrics['reaching_time']:.9g}",
            reaching_passed=str(metrics["reaching_passed"]).lower(),
            lyapunov_violations=str(metrics["lyapunov_violations"]),
            estimation_error=f"{max(metrics['max_estimation_error'].values()):.9g}",
        )
        rows.append(row)

    table = os.path.join(args.out, "sweep.csv")
    with open(table, "w", newline="") as f:
        writer = csv.DictWriter(f, fieldnames=SWEEP_COLUMNS)
        writer.writeheader()
        writer.writerows(rows)

    print(f"{'value':>12}  {'status':<9}{'rmse':>14}{'chattering':>14}{'est. error':>14}")
    for row in rows:
        print(f"{row['value']:>12}  {row['status']:<9}{row['rmse']:>14}{row['chattering']:>14}{row['estimation_error']:>14}")
    print(f"Wrote {table}")
    return EXIT_OK


def cmd_verify(args: argparse.Namespace) -> int:
    results = run_checks(args.only)
    width = max(len(r.name) for r in results)
    for r in results:
        print(f"{r.name:<{width}}  {'PASS' if r.passed else 'FAIL'}  {r.runtime:6.1f} s  {r.detail}")
    failed = [r.name for r in results if not r.passed]
    print(f"{len(results) - len(failed)}/{len(results)} checks passed")
    return EXIT_FAILED if failed else EXIT_OK


def cmd_list(args: argparse.Namespace) -> int:
    for name, path, description in list_scenarios():
        print(f"{name:<18} {description}")
        if args.verbose:
            print(f"{'':<18} {path}")
    return EXIT_OK


def _add_scenario_args(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("scenario", help="Scenario name or path to a .scenario file")
    parser.add_argument("--out", default="./out", help="Output directory (default: ./out)")
    parser.add_argument("--seed", type=int, help="Override sim.seed")
    parser.add_argument("--dt", type=float, help="Override sim.dt, s")
    parser.add_argument("--duration", type=float, help="Override sim.duration, s")
    parser.add_argument(
        "--set", action="append", metavar="KEY=VALUE", help="Override any scenario key; an empty value removes it"
    )
    parser.add_argument(
        "--window-start", type=float, default=0.0, help="Start of the tracking-RMSE window, s (default: 0)"
    )


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="sea-smc", description="SEA sliding-mode control simulator")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="Run a scenario and write its trace and summary")
    _add_scenario_args(run)
    run.set_defaults(func=cmd_run)

    sweep = sub.add_parser("sweep", help="Run a scenario once per value of one key")
    _add_scenario_args(sweep)
    sweep.add_argument("parameter", help="Scenario key to vary, e.g. controller.epsilon")
    sweep.add_argument("values", nargs="+", help="Values to run")
    sweep.set_defaults(func=cmd_sweep)

    verify = sub.add_parser("verify", help="Run the acceptance checks")
    verify.add_argument("--only", action="append", choices=list(CHECKS), help="Run only this check (repeatable)")
    verify.set_defaults(func=cmd_verify)

    ls = sub.add_parser("list-scenarios", help="List scenarios on the search path")
    ls.add_argument("-v", "--verbose", action="store_true", help="Also print file paths")
    ls.set_defaults(func=cmd_list)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    log_level = getattr(logging, os.getenv("LOG_LEVEL", "INFO").upper(), logging.INFO)
    if not logging.getLogger().handlers:
        logging.basicConfig(level=log_level, format="%(asctime)s - %(name)s - %(levelname)s - %(message)s")

    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except DivergenceError as e:
        logger.error(f"Simulation diverged at sample {e.sample} (t={e.time:.6g} s): {e}")
        print(f"error: simulation diverged at sample {e.sample}: {e}", file=sys.stderr)
        return EXIT_DIVERGED
    except (ScenarioError, ValueError, OSError) as e:
        logger.error(f"Invalid input: {e}")
        print(f"error: {e}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
