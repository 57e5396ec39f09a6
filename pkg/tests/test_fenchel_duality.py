import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tiltlab import catalog
from tiltlab import variational_oracles as vo
from tiltlab.errors import NotExactError
from tiltlab.fenchel_duality import (
    biconjugation_error, conjugate, dual_objective, fenchel_young_check, inverse_subdiff_check,
    primal_objective, smooth_dependence_probe, solve_primal_dual,
)
from tiltlab.function_algebra import (
    Indicator, NormL1, NormL2, NormLinf, Polynomial, SquaredComposite, Sum, Tilted,
)
from tiltlab.polyhedra import Polyhedron
from tiltlab.polynomials import Poly

I1 = np.eye(1)


def half_sq(n=1):
    return Polynomial(Poly.quadratic(np.eye(n)))  # ½|x|²


def halfline(sign):
    # sign=+1: [0, inf); sign=-1: (-inf, 0]
    return Indicator(Polyhedron(np.array([[-float(sign)]]), np.array([0.0]), 1))


CONVEX_LIBRARY = {
    "abs": catalog.abs1(),
    "half_sq": half_sq(1),
    "nonneg": halfline(+1),
    "max_xy": catalog.max_xy(),
    "l1_squared": catalog.l1_squared_2d(),
    "linf": NormLinf(2),
    "l1": NormL1(2),
    "quad2": Polynomial(Poly.quadratic(np.array([[2.0, 0.5], [0.5, 1.0]]), np.array([0.3, -0.2]), 0.1)),
    "tilted_abs": Tilted(catalog.abs1(), np.array([0.3])),
    "box_plus_linear": Sum((Indicator(Polyhedron.box([-1.0, 0.0], [1.0, 2.0])), Polynomial(Poly.linear([1.0, -0.5])))),
    "l2_squared": SquaredComposite(NormL2(2)),
}

DUALITY_INSTANCES = {
    "quad_abs": (half_sq(1), catalog.abs1(), I1),
    "abs_quad": (catalog.abs1(), half_sq(1), I1),
    "quad_quad": (half_sq(1), half_sq(1), I1),
    "quad_nonneg": (half_sq(1), halfline(+1), I1),
    "quad2_l1": (half_sq(2), NormL1(2), np.array([[1.0, 0.5], [0.0, 1.0]])),
    "l1sq_quad": (catalog.l1_squared_2d(), half_sq(2), np.eye(2)),
    "linf_quad": (NormLinf(2), half_sq(2), np.array([[1.0, -1.0], [0.5, 1.0]])),
}


def _grid(n):
    g = np.linspace(-2, 2, 41)
    return g[:, None] if n == 1 else np.array(list(itertools.product(g[::2], g[::2])))


# conjugates

def test_conjugate_examples():
    u = np.linspace(-2, 2, 81)[:, None]
    inside = np.abs(u[:, 0]) <= 1
    got = conjugate(catalog.abs1()).evaluate_many(u)
    assert np.all(got[inside] == 0.0) and np.all(np.isinf(got[~inside]))
    assert np.allclose(conjugate(half_sq(1)).evaluate_many(u), 0.5 * u[:, 0] ** 2)
    got = conjugate(halfline(+1)).evaluate_many(u)
    assert np.all(got[u[:, 0] <= 0] == 0.0) and np.all(np.isinf(got[u[:, 0] > 0]))


def test_conjugate_closed_forms_in_two_dimensions():
    U = _grid(2)
    # (|x|+|y|)^2 has conjugate ||u||_inf^2 / 4
    assert np.allclose(conjugate(catalog.l1_squared_2d()).evaluate_many(U), np.abs(U).max(axis=1) ** 2 / 4)
    got = conjugate(NormLinf(2)).evaluate_many(U)
    ball = np.abs(U).sum(axis=1) <= 1 + 1e-12
    assert np.all(got[ball] == 0.0) and np.all(np.isinf(got[~ball]))


def test_conjugate_matches_brute_force_supremum():
    # sup_x <u,x> - f(x) over a fine grid, for u strictly inside the domain of f*
    x = np.linspace(-10, 10, 200_001)[:, None]
    for f in (half_sq(1), Tilted(catalog.abs1(), np.array([0.3]))):
        fs = conjugate(f)
        fx = f.evaluate_many(x)
        for u in (-0.5, 0.1, 0.6):
            assert fs.evaluate([u]) == pytest.approx(np.max(u * x[:, 0] - fx), abs=1e-8)


def test_conjugate_rejects_nonconvex_and_unsupported():
    with pytest.raises(NotExactError):
        conjugate(catalog.double_well())
    with pytest.raises(NotExactError):
        conjugate(NormL2(2))


@pytest.mark.parametrize("name", sorted(CONVEX_LIBRARY))
def test_biconjugation_on_grid(name):
    f = CONVEX_LIBRARY[name]
    assert biconjugation_error(f, _grid(f.n)) <= 1e-10


@pytest.mark.parametrize("name", sorted(CONVEX_LIBRARY))
def test_inverse_subdifferential_and_fenchel_young(name):
    f = CONVEX_LIBRARY[name]
    assert inverse_subdiff_check(f, samples=100)
    assert fenchel_young_check(f, samples=100)


def test_inverse_subdifferential_examples():
    # u = 1 ∈ ∂|.|(2) and 2 ∈ N_[-1,1](1)
    assert vo.limiting_subdiff(catalog.abs1(), [2.0]).contains([1.0])
    assert vo.limiting_subdiff(conjugate(catalog.abs1()), [1.0]).contains([2.0])
    # (x, u) = (0, -3) for the indicator of [0, inf): ∂f*(-3) = {0}
    S = vo.limiting_subdiff(conjugate(halfline(+1)), [-3.0])
    assert S.contains([0.0]) and not S.contains([0.1])


# primal-dual

def test_primal_dual_examples():
    c = solve_primal_dual(half_sq(1), catalog.abs1(), I1, [0.0], [0.0])
    assert c.x[0] == pytest.approx(0.0, abs=1e-12) and c.u[0] == pytest.approx(0.0, abs=1e-12)
    assert c.primal_value == pytest.approx(0.0, abs=1e-12) and c.gap == pytest.approx(0.0, abs=1e-12)
    c = solve_primal_dual(half_sq(1), catalog.abs1(), I1, [0.5], [0.0])
    assert c.x[0] == pytest.approx(0.0, abs=1e-10) and c.u[0] == pytest.approx(0.5, abs=1e-10)
    assert c.dual_value == pytest.approx(0.0, abs=1e-12) and abs(c.gap) <= 1e-12
    assert c.complementarity and c.feasibility["y_interior"] and c.feasibility["v_interior"]


@given(st.floats(-0.9, 0.9), st.floats(-1, 1))
@settings(max_examples=20)
def test_quad_abs_closed_form(v, y):
    # min ½x² + |x+y| - vx: x = v - s with s ∈ ∂|.|(x+y), by cases on the sign of x+y
    c = solve_primal_dual(half_sq(1), catalog.abs1(), I1, [v], [y])
    if v + y > 1:
        x, u = v - 1.0, 1.0
    elif v + y < -1:
        x, u = v + 1.0, -1.0
    else:
        x, u = -y, v + y
    assert c.x[0] == pytest.approx(x, abs=1e-8)
    assert c.u[0] == pytest.approx(u, abs=1e-8)
    assert abs(c.gap) <= 1e-8


@pytest.mark.parametrize("name", sorted(DUALITY_INSTANCES))
def test_weak_duality_on_sampled_pairs(name):
    f, h, A = DUALITY_INSTANCES[name]
    fs, hs = conjugate(f), conjugate(h)
    rng = np.random.default_rng(8)
    for _ in range(50):
        v = rng.uniform(-0.9, 0.9, size=f.n)
        y = rng.uniform(-1, 1, size=h.n)
        x = rng.uniform(-2, 2, size=f.n)
        u = rng.uniform(-1, 1, size=h.n)
        p, d = primal_objective(f, h, A, v, y, x), dual_objective(fs, hs, A, v, y, u)
        if np.isfinite(p) and np.isfinite(d):
            assert p >= d - 1e-12


@pytest.mark.parametrize("name", sorted(DUALITY_INSTANCES))
def test_strong_duality_and_complementarity(name):
    f, h, A = DUALITY_INSTANCES[name]
    rng = np.random.default_rng(1)
    for _ in range(15):
        v = rng.uniform(-0.9, 0.9, size=f.n)
        y = rng.uniform(-1, 1, size=h.n)
        c = solve_primal_dual(f, h, A, v, y)
        assert c.status == "CONVERGED" and c.feasibility["y_interior"]
        assert abs(c.gap) <= 1e-8 and c.gap >= -1e-9
        # u ∈ ∂h(Ax + y) and v - A'u ∈ ∂f(x), rechecked here
        assert vo.limiting_subdiff(h, A @ c.x + y).contains(c.u, 1e-7)
        assert vo.limiting_subdiff(f, c.x).contains(v - A.T @ c.u, 1e-7)


# smooth dependence

def test_smooth_dependence_examples():
    r = smooth_dependence_probe(half_sq(1), half_sq(1), I1, [0.2], [0.1])
    assert r.passes
    # solutions are linear in (v, y): quotients constant across scales
    assert max(r.quotients) / min(r.quotients) == pytest.approx(1.0, abs=1e-6)
    assert smooth_dependence_probe(catalog.abs1(), half_sq(1), I1, [0.5], [0.0]).passes
    r = smooth_dependence_probe(catalog.abs1(), half_sq(1), I1, [1.0], [0.0])
    assert not r.passes
