"""Decay slopes of the degenerate perturbation term in a negative Besov norm."""
import argparse
import json

from schauder_lab.besov import psi_besov_profile
from schauder_lab.catalog import make_problem


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--problem", default="kinetic_rough")
    ap.add_argument("--theta", type=int, nargs=2, default=[2, 0])
    ap.add_argument("--mode", choices=["integrate", "slice"], default="integrate")
    args = ap.parse_args()

    rep = psi_besov_profile(make_problem(args.problem, {}), theta=tuple(args.theta), mode=args.mode)
    keep = {k: rep[k] for k in ("slope", "predicted_slope", "exact_cancellation") if k in rep.payload}
    print(json.dumps({**keep, "passed": rep.passed}, indent=2, default=float))


if __name__ == "__main__":
    main()
