"""Grid-error budget for the solver on the kinetic problem.

Solves on a 21-point and a 41-point grid over [-5, 5]^2 and reports the
Richardson estimate 4/3 max|u_21 - u_41| at the probe nodes, assuming
second-order convergence in h.
"""
import argparse

import numpy as np

from schauder_lab.catalog import make_problem
from schauder_lab.solver import GridSpec, parametrix_solve

PROBES = np.array([[a, b] for a in (-0.5, 0.0, 0.5) for b in (-0.5, 0.0, 0.5)])


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--coarse", type=int, default=21)
    ap.add_argument("--fine", type=int, default=41)
    ap.add_argument("--time-points", type=int, default=9)
    args = ap.parse_args()

    p = make_problem("kinetic", {})
    vals = {}
    for n in (args.coarse, args.fine):
        grid = GridSpec.uniform(p.dims, 5.0, n, time_points=args.time_points)
        vals[n] = parametrix_solve(p, grid, tol=1e-7).field.interpolate(0.0, PROBES)
        print(f"{n:3d} points: {np.array2string(vals[n], precision=5)}")
    diff = float(np.max(np.abs(vals[args.coarse] - vals[args.fine])))
    print(f"max difference {diff:.4g}; Richardson budget {4 * diff / 3:.4g}")


if __name__ == "__main__":
    main()
