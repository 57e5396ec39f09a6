"""Strict complementarity along a grid of tilts for a catalog function.

    python3 scripts/sc_sweep.py --function abs --nodes 2001
"""
import argparse
import csv
import sys

import numpy as np

from tiltlab import catalog
from tiltlab.genericity_lab import strict_complementarity_sweep


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--function", default="abs", choices=sorted(catalog.CATALOG))
    ap.add_argument("--lo", type=float, default=-2.0)
    ap.add_argument("--hi", type=float, default=2.0)
    ap.add_argument("--nodes", type=int, default=2001)
    ap.add_argument("--csv", help="write v,strictly_complementary rows here")
    args = ap.parse_args(argv)
    f = catalog.get(args.function)
    if f.n != 1:
        ap.error("grid sweeps are one-dimensional; pick a function on R")
    nodes = np.linspace(args.lo, args.hi, args.nodes)
    ok = strict_complementarity_sweep(f, nodes)
    print(f"{args.function}: {np.count_nonzero(~ok)} of {nodes.size} tilts fail strict complementarity")
    for v in nodes[~ok]:
        print(f"  v = {v:.12g}")
    if args.csv:
        with open(args.csv, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["v", "strictly_complementary"])
            w.writerows([f"{v:.17g}", str(bool(o)).lower()] for v, o in zip(nodes, ok))


if __name__ == "__main__":
    sys.exit(main())
