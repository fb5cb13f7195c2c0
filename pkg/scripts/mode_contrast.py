"""Footstep-adjustment statistics for open loop, closed loop and closed loop without dead-zone.

The sensor reads the pelvis with an offset that flips sign with the support side plus
white noise; velocities come from the plant so only the position error is corrupted.
"""

import argparse

import numpy as np

from threelp import Scenario, SensorModel, run_scenario

parser = argparse.ArgumentParser(description=__doc__)
parser.add_argument("--bias", type=float, default=2e-3)
parser.add_argument("--noise", type=float, default=1e-4)
parser.add_argument("--seeds", default="3,11,17")
args = parser.parse_args()

sensor = SensorModel(noise_sigma=(args.noise,) * 4, side_bias=(0.0, 0.0, args.bias, 0.0))
for seed in (int(s) for s in args.seeds.split(",")):
    for mode in ("open_loop", "closed_loop", "closed_loop_no_deadzone"):
        s = Scenario(duration=4.0, controller_mode=mode, estimator="ideal", sensor=sensor,
                     seed=seed)
        trace, m = run_scenario(s)
        dp = trace.block("dp", 2)
        drift = abs(trace.column("q2")[-1] - trace.column("q4")[-1])
        print(f"seed {seed:3d} {mode:24s} var dp_x {np.var(dp[:, 0]):.2e}  "
              f"var dp_y {np.var(dp[:, 1]):.2e}  fell {m.fell}  final pelvis offset {drift:.3f} m")
