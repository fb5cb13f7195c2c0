"""Capture boundary, 3-step recovery boundary and a magnitude scan for a forward impulse."""

import argparse
import csv
from pathlib import Path

import numpy as np

from threelp import PushEvent, Scenario, sweep
from threelp.sim import capture_boundary, recovery_boundary

parser = argparse.ArgumentParser(description=__doc__)
parser.add_argument("--mode", choices=["step", "torque"], default="step")
parser.add_argument("--estimator", choices=["ideal", "filtered"], default="ideal")
parser.add_argument("--out", default="results/push_bisection.csv")
args = parser.parse_args()

base = Scenario(duration=4.8, pushes=(PushEvent(0.84, 0.94, (1.0, 0.0)),),
                adjustment_mode=args.mode, estimator=args.estimator)
capture = capture_boundary(base, hi=40.0)
three = recovery_boundary(base, 3, hi=capture)
print(f"capture boundary   {capture:7.3f} N  ({capture * 0.1:.3f} N s impulse)")
print(f"3-step boundary    {three:7.3f} N  ({three / capture:.0%} of capture)")

rows = sweep(base, "push_magnitude", np.linspace(0.5, 1.4 * capture, 15))
out = Path(args.out)
out.parent.mkdir(parents=True, exist_ok=True)
with open(out, "w", newline="") as fh:
    writer = csv.DictWriter(fh, fieldnames=list(rows[0]))
    writer.writeheader()
    writer.writerows(rows)
for r in rows:
    verdict = "fell" if r["fell"] else f"{r['steps_to_recover']} steps"
    print(f"{r['value']:6.2f} N  max|dp| {r['max_abs_dp']:.3f} m  {verdict}")
