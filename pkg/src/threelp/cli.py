"""Command-line entry point: ``threelp {gait,gains,calibrate,simulate,sweep}``."""

from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

import numpy as np

from .filters import calibrate_thresholds, read_trace_channels, write_thresholds
from .gait import GaitError, gait_residual, solve_periodic, write_gait_json, write_trajectory_csv
from .model import ModelParams
from .sim import SWEEP_AXES, Scenario, ScenarioError, run_scenario, sweep, write_outputs
from .stabilizer import Controller, export_gain_table


def _params(path) -> ModelParams:
    return ModelParams() if path is None else ModelParams.load(path)


def _grid(text: str) -> list[float]:
    """``a,b,c`` or ``start:stop:count`` (inclusive linspace)."""
    if text.count(":") == 2:
        start, stop, count = text.split(":")
        return np.linspace(float(start), float(stop), int(count)).tolist()
    return [float(v) for v in text.split(",") if v.strip()]


def cmd_gait(args) -> int:
    params = _params(args.params)
    if args.step_time is not None:
        params = params.replace(T=args.step_time)
    gait = solve_periodic(params, (args.speed, args.lateral_speed))
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_gait_json(gait, out / "gait.json")
    write_trajectory_csv(gait, out / "trajectory.csv", args.samples)
    print(f"residual {gait_residual(gait):.3e}; wrote {out / 'gait.json'}, "
          f"{out / 'trajectory.csv'}")
    return 0


def cmd_gains(args) -> int:
    ctrl = Controller.synthesize(_params(args.params))
    table = export_gain_table(ctrl.ed, None, ctrl.gain, args.grid)
    header = args.header or str(Path(args.out).with_suffix(".json"))
    table.write(args.out, header)
    print(f"{args.grid} rows -> {args.out} (header {header})")
    return 0


def cmd_calibrate(args) -> int:
    samples = read_trace_channels(args.trace, args.prefix)[args.skip:]
    thresholds = calibrate_thresholds(samples)
    write_thresholds(args.out, thresholds)
    print(" ".join(f"{a:.4g}" for a in thresholds))
    return 0


def cmd_simulate(args) -> int:
    scenario = Scenario.load(args.scenario)
    trace, metrics = run_scenario(scenario)
    write_outputs(trace, metrics, args.out, columns=args.columns)
    print(json.dumps(metrics.to_dict()))
    return 0


def cmd_sweep(args) -> int:
    base = Scenario.load(args.base) if args.base else Scenario()
    rows = sweep(base, args.axis, _grid(args.grid), workers=args.workers)
    fh = open(args.out, "w", newline="") if args.out else sys.stdout
    try:
        writer = csv.DictWriter(fh, fieldnames=list(rows[0]))
        writer.writeheader()
        writer.writerows(rows)
    finally:
        if args.out:
            fh.close()
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="threelp", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gait", help="solve a periodic gait and sample its trajectory")
    p.add_argument("--speed", type=float, default=0.0, help="sagittal speed (m/s)")
    p.add_argument("--lateral-speed", type=float, default=0.0)
    p.add_argument("--step-time", type=float, default=None, help="phase duration (s)")
    p.add_argument("--params", default=None, help="model parameters JSON")
    p.add_argument("--samples", type=int, default=101)
    p.add_argument("--out", default=".", help="output directory")
    p.set_defaults(func=cmd_gait)

    p = sub.add_parser("gains", help="export the time-projection gain table")
    p.add_argument("--params", default=None)
    p.add_argument("--grid", type=int, default=200, help="samples per phase")
    p.add_argument("--out", default="gains.csv")
    p.add_argument("--header", default=None, help="JSON header path (default: next to CSV)")
    p.set_defaults(func=cmd_gains)

    p = sub.add_parser("calibrate", help="dead-zone thresholds from a trace")
    p.add_argument("--trace", required=True)
    p.add_argument("--out", default="thresholds.json")
    p.add_argument("--prefix", default="e_filt")
    p.add_argument("--skip", type=int, default=0, help="leading samples to discard")
    p.set_defaults(func=cmd_calibrate)

    p = sub.add_parser("simulate", help="run one scenario")
    p.add_argument("--scenario", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--columns", action="store_true", help="also write .dat column files")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("sweep", help="metrics over a grid of one scenario axis")
    p.add_argument("--axis", required=True, choices=SWEEP_AXES)
    p.add_argument("--grid", required=True, help="a,b,c or start:stop:count")
    p.add_argument("--base", default=None, help="base scenario JSON")
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--out", default=None, help="CSV path (default: stdout)")
    p.set_defaults(func=cmd_sweep)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ScenarioError, GaitError, ValueError, KeyError, FileNotFoundError,
            json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
