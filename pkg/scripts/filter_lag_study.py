"""How estimator lag limits push recovery.

Within a phase the pelvis diverges at rate omega (the unstable eigenvalue of the
continuous dynamics), and scaling the step feedback by a factor g keeps the loop stable
only for g in a narrow band around 1. A velocity estimate that lags by L seconds
under-reads a diverging state by about 1 - exp(-omega L); this script prints that next
to closed-loop outcomes (steps to recover, -1 not recovered, F fell) for a grid of IIR
coefficients and averaging windows.
"""

import argparse
import itertools

import numpy as np

from threelp import ModelParams, PushEvent, Scenario, run_scenario
from threelp.model import dynamics_for
from threelp.stabilizer import Controller

parser = argparse.ArgumentParser(description=__doc__)
parser.add_argument("--zetas", default="1.0,0.5,0.3,0.1")
parser.add_argument("--windows", default="1,3,5,10,30")
parser.add_argument("--forces", default="2,5")
args = parser.parse_args()

params = ModelParams()
ctrl = Controller.synthesize(params)
free = [i for i in range(8) if not np.any(ctrl.ed.Chat[:, i])]
open_eigs = np.linalg.eigvals(ctrl.ed.Ahat[np.ix_(free, free)])
lam = float(np.max(np.abs(open_eigs)))
omega = float(np.sqrt(np.max(np.linalg.eigvals(dynamics_for(params).C_x[:4, :4]).real)))
margin = []
for g in np.linspace(0.0, 2.0, 401):
    Acl = ctrl.ed.Ahat - g * ctrl.ed.Bhat @ ctrl.K
    if np.max(np.abs(np.linalg.eigvals(Acl[np.ix_(free, free)]))) < 1.0:
        margin.append(g)
print(f"unstable step eigenvalue {lam:.2f}, divergence rate {omega:.2f} 1/s, "
      f"stable gain scaling [{min(margin):.2f}, {max(margin):.2f}]")

dt = 0.002
forces = [float(f) for f in args.forces.split(",")]
print(f"{'zeta':>5} {'window':>6} {'lag ms':>7} {'under-read':>10}  " +
      "  ".join(f"{m[0]}{f:g}N" for m in ("torque", "step") for f in forces))
for zeta, window in itertools.product([float(z) for z in args.zetas.split(",")],
                                      [int(w) for w in args.windows.split(",")]):
    lag = dt * ((1 - zeta) / zeta + (window + 1) / 2)
    cells = []
    for mode in ("torque", "step"):
        for f in forces:
            s = Scenario(duration=4.0, zeta=zeta, window=window, adjustment_mode=mode,
                         pushes=(PushEvent(0.84, 0.94, (f, 0.0)),))
            _, m = run_scenario(s)
            cells.append("F" if m.fell else str(m.steps_to_recover))
    print(f"{zeta:5.2f} {window:6d} {lag * 1e3:7.1f} {1 - np.exp(-omega * lag):10.1%}  " +
          "  ".join(f"{c:>7}" for c in cells))
