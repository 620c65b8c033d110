"""Monte Carlo reference values at the probe nodes, with 95% half-widths."""
import argparse

import numpy as np

from schauder_lab.catalog import make_problem
from schauder_lab.feynman_kac import McConfig, fk_estimate_many

PROBES = np.array([[a, b] for a in (-0.5, 0.0, 0.5) for b in (-0.5, 0.0, 0.5)])


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--problem", default="kinetic")
    ap.add_argument("--paths", type=int, default=100_000)
    ap.add_argument("--steps", type=int, default=1000)
    ap.add_argument("--seed", type=int, default=1)
    args = ap.parse_args()

    p = make_problem(args.problem, {})
    cfg = McConfig(paths=args.paths, steps=args.steps, seed=args.seed)
    for x, r in zip(PROBES, fk_estimate_many(p, 0.0, PROBES, cfg)):
        print(f"{x[0]:+.1f} {x[1]:+.1f}  {r.estimate:.6f} +- {r.halfwidth:.6f}")


if __name__ == "__main__":
    main()
