"""Schauder ratios across mollification levels, plus the time-chaining check."""
import argparse

from schauder_lab.catalog import make_problem
from schauder_lab.lab import GridConfig, chained_consistency, schauder_constant_report


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--problem", default="sawtooth")
    ap.add_argument("--levels", type=int, nargs="+", default=[8, 16, 32])
    ap.add_argument("--chain", type=int, default=4)
    args = ap.parse_args()

    p = make_problem(args.problem, {})
    rep = schauder_constant_report(p, tuple(args.levels))
    for r in rep["rows"]:
        print(f"m={r['m']:3d}  ratio {r['ratio']:.5f}")
    print(f"relative spread {rep['relative_spread']:.2e}  passed {rep.passed}")
    chain = chained_consistency(p, args.chain, GridConfig())
    print(f"N={args.chain} vs N=1: {chain['max_difference']:.2e}  passed {chain.passed}")


if __name__ == "__main__":
    main()
