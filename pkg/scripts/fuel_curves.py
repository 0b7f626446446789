"""Tabulate the four microscopic fuel models over a speed/acceleration grid.

Output CSV columns: v, a, F_VTM, F_MEF (constant history), F_VSP, F_ARRB
and their unit-harmonized average F_All. Every model is converted to ml/s
(VT-Micro and MEF from L/s, VSP from g/s through the fuel density). The printed summary
shows a few cruise and acceleration points.

    python3 scripts/fuel_curves.py --out data/fuel_grid.csv
"""
import argparse
import sys
from pathlib import Path

import numpy as np

from ultratraj.metrics import DEFAULT_COEFFS, arrb, fuel_all, mef, vsp_fuel, vt_micro
from ultratraj.pipeline import save_table


def grid_rows(speeds, accels):
    for v in speeds:
        for a in accels:
            history = [a] * (DEFAULT_COEFFS.mef_T + 1)
            yield [
                float(v),
                float(a),
                float(vt_micro(v, a)) * 1000.0,
                float(mef(v, history)) * 1000.0,
                float(vsp_fuel(v, a)) / DEFAULT_COEFFS.fuel_density * 1000.0,
                float(arrb(v, a)),
                float(fuel_all(v, history)) * 1000.0,
            ]


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--vmax", type=float, default=35.0)
    ap.add_argument("--dv", type=float, default=0.5)
    ap.add_argument("--amax", type=float, default=3.0)
    ap.add_argument("--da", type=float, default=0.25)
    ap.add_argument("--out", default="data/fuel_grid.csv")
    args = ap.parse_args(argv)

    speeds = np.round(np.arange(0.0, args.vmax + 1e-9, args.dv), 9)
    accels = np.round(np.arange(-args.amax, args.amax + 1e-9, args.da), 9)
    rows = list(grid_rows(speeds, accels))
    Path(args.out).parent.mkdir(parents=True, exist_ok=True)
    save_table(("v", "a", "F_VTM", "F_MEF", "F_VSP", "F_ARRB", "F_All"), rows, args.out)
    print(f"wrote {len(rows)} grid points to {args.out}")

    print(f"\n{'v':>5}{'a':>6}{'VTM':>9}{'MEF':>9}{'VSP':>9}{'ARRB':>9}{'All':>9}   (ml/s)")
    for v, a in ((0, 0), (10, 0), (20, 0), (30, 0), (10, 1), (20, 1), (20, -1)):
        row = next(grid_rows([v], [a]))
        print(f"{v:>5}{a:>6}" + "".join(f"{x:>9.4f}" for x in row[2:]))
    return 0


if __name__ == "__main__":
    sys.exit(main())
