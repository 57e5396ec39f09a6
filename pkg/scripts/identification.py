"""Finite identification under random tilts for (|x|+|y|)^2, plus the untilted counterexample.

    python3 scripts/identification.py --tilts 100
"""
import argparse
import sys
from collections import Counter

import numpy as np

from tiltlab import catalog
from tiltlab.criticality import enumerate_critical_points
from tiltlab.genericity_lab import finite_identification_test


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--tilts", type=int, default=100)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args(argv)
    f = catalog.l1_squared_2d()
    print("v = 0:", finite_identification_test(f, [0.0, 0.0], [0.0, 0.0]).verdict)
    rng = np.random.default_rng(args.seed)
    verdicts = Counter()
    for k in range(args.tilts):
        v = rng.uniform(-1, 1, size=2)
        for p in enumerate_critical_points(f, v):
            tr = finite_identification_test(f, v, p.x, seed=k)
            dim = None if tr.manifold is None else tr.manifold.dim
            verdicts[(tr.verdict, dim)] += 1
    for (verdict, dim), c in sorted(verdicts.items(), key=str):
        print(f"  {verdict:<24} dim={dim}: {c}")


if __name__ == "__main__":
    sys.exit(main())
