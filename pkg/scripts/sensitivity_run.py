"""Sensitivity constants (coarse and refined) for each perturbation lemma."""
import argparse

from schauder_lab.catalog import make_problem
from schauder_lab.sensitivity import sensitivity_suite


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--problem", default="kinetic_rough")
    ap.add_argument("--samples", type=int, default=16)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    rep = sensitivity_suite(make_problem(args.problem, {}), samples=args.samples, seed=args.seed)
    for r in rep["rows"]:
        print(f"{r['lemma']:>16s}  {r['constant']:.4g}  {r['refined']:.4g}  stable={r['stable']}")
    print("passed:", rep.passed)


if __name__ == "__main__":
    main()
