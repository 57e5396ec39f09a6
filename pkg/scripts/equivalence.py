"""Truth tables of the four second-order conditions over random tilts of catalog functions.

    python3 scripts/equivalence.py --tilts 100 square abs double_well
"""
import argparse
import sys
from collections import Counter

import numpy as np

from tiltlab import catalog
from tiltlab.criticality import enumerate_critical_points
from tiltlab.genericity_lab import build_selection_atlas, second_order_equivalence_check


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("functions", nargs="*", default=["square", "abs", "double_well", "cubic",
                                                      "square_plus_neg_abs", "cubic_on_interval"])
    ap.add_argument("--tilts", type=int, default=100)
    ap.add_argument("--seed", type=int, default=42)
    args = ap.parse_args(argv)
    rng = np.random.default_rng(args.seed)
    inconsistent = 0
    for name in args.functions:
        f = catalog.get(name)
        trans = np.zeros(0)
        if f.n == 1:
            trans = np.asarray(build_selection_atlas(f, [np.linspace(-2, 2, 401)]).transition_values).reshape(-1)
        codes = Counter()
        for k in range(args.tilts):
            v = rng.uniform(-2, 2, size=f.n)
            if trans.size and np.min(np.abs(trans - v[0])) < 1e-6:
                continue
            for p in enumerate_critical_points(f, v):
                tab = second_order_equivalence_check(f, v, p.x, seed=k)
                codes[tab.code()] += 1
                inconsistent += not tab.consistent
        print(f"{name:<22}", dict(sorted(codes.items())))
    print("inconsistent tables:", inconsistent)
    return 1 if inconsistent else 0


if __name__ == "__main__":
    sys.exit(main())
