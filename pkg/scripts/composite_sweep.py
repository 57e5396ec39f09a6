"""Composite critical pairs for min -<v,x> s.t. x^2 - 1 + y <= 0, checked against closed-form KKT.

    python3 scripts/composite_sweep.py --count 1000
"""
import argparse
import sys

import numpy as np

from tiltlab.function_algebra import Indicator, Polynomial
from tiltlab.genericity_lab import CompositeSpec, SamplingConfig, run_genericity_experiment
from tiltlab.polyhedra import Polyhedron
from tiltlab.polynomials import Poly, SmoothMap


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--count", type=int, default=1000)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--jobs", type=int, default=None)
    args = ap.parse_args(argv)
    x = Poly.variable(1, 0)
    spec = CompositeSpec(Polynomial(Poly(1)), Indicator(Polyhedron(np.array([[1.0]]), np.zeros(1), 1)),
                         SmoothMap([x ** 2 - Poly.constant(1, 1.0)]))
    cfg = SamplingConfig(box=[(-1, 1)], y_box=[(-1, 1)], count=args.count, master_seed=args.seed,
                         exclude_v_radius=1e-3)
    R = run_genericity_experiment(spec, cfg, jobs=args.jobs)
    worst_x = worst_l = 0.0
    for rec in R.samples:
        v, y = rec["sample"]["v"][0], rec["sample"]["y"][0]
        s = np.sqrt(1 - y)
        worst_x = max(worst_x, abs(rec["x"][0] - np.sign(v) * s))
        worst_l = max(worst_l, abs(rec["lambda"][0] - abs(v) / (2 * s)))
    print(f"{len(R.samples)} samples, {len(R.failure_set)} flagged")
    print(f"max |x - x_kkt| = {worst_x:.2e}, max |lambda - lambda_kkt| = {worst_l:.2e}")


if __name__ == "__main__":
    sys.exit(main())
