"""Primal-dual certificates for 1/2 x^2 + |x + y| - v x over a grid of (v, y).

    python3 scripts/duality.py --nodes 9
"""
import argparse
import sys

import numpy as np

from tiltlab import catalog
from tiltlab.fenchel_duality import smooth_dependence_probe, solve_primal_dual
from tiltlab.function_algebra import Polynomial
from tiltlab.polynomials import Poly


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--nodes", type=int, default=9)
    args = ap.parse_args(argv)
    f, h, A = Polynomial(Poly.quadratic(np.eye(1))), catalog.abs1(), np.eye(1)
    print(f"{'v':>7} {'y':>7} {'x':>9} {'u':>9} {'gap':>10}  interior  smooth")
    for v in np.linspace(-0.9, 0.9, args.nodes):
        for y in np.linspace(-1, 1, args.nodes):
            c = solve_primal_dual(f, h, A, [v], [y])
            interior = c.feasibility["y_interior"] and c.feasibility["v_interior"]
            smooth = smooth_dependence_probe(f, h, A, [v], [y]).passes
            print(f"{v:7.3f} {y:7.3f} {c.x[0]:9.5f} {c.u[0]:9.5f} {c.gap:10.2e}  {interior!s:<8}  {smooth}")


if __name__ == "__main__":
    sys.exit(main())
