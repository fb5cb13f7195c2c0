"""Closed-loop walking started from the in-place gait and commanded to a new speed."""

import argparse

from threelp import Scenario, run_scenario

parser = argparse.ArgumentParser(description=__doc__)
parser.add_argument("--speeds", default="0,0.1,0.2")
parser.add_argument("--duration", type=float, default=2.4)
args = parser.parse_args()

for v in (float(x) for x in args.speeds.split(",")):
    s = Scenario(v_des=(v, 0.0), v_init=(0.0, 0.0), duration=args.duration, estimator="ideal")
    trace, m = run_scenario(s)
    print(f"v_des {v:.2f} m/s: final speed error {m.final_velocity_error:+.2e} m/s, "
          f"max |dp| {m.max_abs_dp:.3f} m over {m.phases} steps")
