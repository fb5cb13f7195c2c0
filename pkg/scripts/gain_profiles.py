"""Export the time-projection gain table and print how the gains evolve over a phase."""

import argparse
from pathlib import Path

import numpy as np

from threelp import ModelParams
from threelp.stabilizer import Controller, export_gain_table

parser = argparse.ArgumentParser(description=__doc__)
parser.add_argument("--grid", type=int, default=200)
parser.add_argument("--out", default="results/gains.csv")
args = parser.parse_args()

ctrl = Controller.synthesize(ModelParams())
table = export_gain_table(ctrl.ed, None, ctrl.gain, args.grid)
out = Path(args.out)
out.parent.mkdir(parents=True, exist_ok=True)
table.write(out, out.with_suffix(".json"))
print(f"wrote {out} ({args.grid} rows)")
names = ["swing x", "pelvis x", "swing vx", "pelvis vx"]
cols = [0, 2, 4, 6]
print("tau     " + "  ".join(f"{n:>10}" for n in names) + "   (sagittal footstep gain -Gp)")
for i in np.linspace(0, args.grid - 1, 9).astype(int):
    print(f"{table.tau_grid[i]:.3f}  " + "  ".join(f"{-table.Gp[i, 0, c]:10.4f}" for c in cols))
