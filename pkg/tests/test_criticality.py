import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from oracles import brute_force_no_lower, constrained_kkt, double_well_critical, grid_argmins
from tiltlab import catalog
from tiltlab.criticality import (
    LOCAL_MIN, NOT_LOCAL_MIN, CompositeProblem, CriticalPair, check_qualifications, classify_critical_point,
    critical_residual, enumerate_critical_points, local_critical_points, residual, solve_composite_critical,
)
from tiltlab.function_algebra import Indicator, NormL1, Polynomial, Sum
from tiltlab.polyhedra import Polyhedron
from tiltlab.polynomials import Poly, SmoothMap

x1 = Poly.variable(1, 0)


def zero():
    return Polynomial(Poly(1))


def nonpos():
    return Indicator(Polyhedron(np.array([[1.0]]), np.array([0.0]), 1))


def circle_map():
    return SmoothMap([x1 ** 2 - Poly.constant(1, 1.0)])


def solve(v, y, x0=1.0, l0=0.5):
    return solve_composite_critical(zero(), nonpos(), circle_map(), [v], [y], [x0], [l0])


# enumeration

def test_enumerate_examples():
    pts = enumerate_critical_points(NormL1(1), [0.5])
    assert len(pts) == 1 and pts[0].x[0] == 0.0 and pts[0].residual == 0.0
    pts = enumerate_critical_points(catalog.double_well(), [2.0])
    ref = double_well_critical(2.0)
    assert len(ref) == 1 and len(pts) == 1
    assert pts[0].x[0] == pytest.approx(ref[0], abs=1e-10)
    assert enumerate_critical_points(NormL1(1), [1.5]) == []


@given(st.floats(-3, 3).filter(lambda v: abs(abs(v) - 1.5396007178390020) > 1e-3))
def test_double_well_enumeration_matches_cubic_roots(v):
    pts = enumerate_critical_points(catalog.double_well(), [v])
    ref = double_well_critical(v)
    assert len(pts) == len(ref)
    assert np.allclose([p.x[0] for p in pts], ref, atol=1e-8)


@pytest.mark.parametrize("name", ["abs", "double_well", "cubic", "square_plus_neg_abs", "cubic_on_interval",
                                  "neg_abs", "l1_squared_2d"])
def test_every_returned_point_has_small_independent_residual(name):
    f = catalog.get(name)
    rng = np.random.default_rng(3)
    for v in rng.uniform(-1.5, 1.5, size=(10, f.n)):
        for p in enumerate_critical_points(f, v):
            assert critical_residual(f, p.x, v) <= 1e-8


def test_continuum_is_flagged_not_isolated():
    pts = enumerate_critical_points(NormL1(1), [1.0])
    assert pts and all(not p.isolated for p in pts)


def test_two_dimensional_enumeration_l1_squared():
    # minimizer of (|x|+|y|)^2 - <v,.> sits on the axis of the larger tilt coordinate
    pts = enumerate_critical_points(catalog.l1_squared_2d(), [0.4, 0.1])
    assert len(pts) == 1
    assert np.allclose(pts[0].x, [0.2, 0.0], atol=1e-9)


def test_local_critical_points_sorted_by_distance():
    pts = local_critical_points(catalog.double_well(), [0.0], [0.9], radius=2.0)
    assert [round(float(p.x[0]), 9) for p in pts] == [1.0, 0.0, -1.0]


def test_convex_composite_agrees_with_enumeration():
    # f = x^2, h = |.| with G = x: composite critical points equal critical points of x^2 + |x|
    f = catalog.square()
    for v in (-2.0, -0.5, 0.3, 1.7):
        pair = solve_composite_critical(f, NormL1(1), SmoothMap.identity(1), [v], [0.0], [0.1], [0.0])
        pts = enumerate_critical_points(Sum((f, NormL1(1))), [v])
        assert pair.status == "CONVERGED" and len(pts) == 1
        assert pair.x[0] == pytest.approx(pts[0].x[0], abs=1e-8)


# classification

def test_classification_examples():
    assert classify_critical_point(catalog.square(), [0.0], [0.0]) == LOCAL_MIN
    assert classify_critical_point(Polynomial(-1.0 * x1 ** 2), [0.0], [0.0]) == NOT_LOCAL_MIN
    f = catalog.double_well()
    assert f.evaluate([0.01]) < f.evaluate([0.0])
    assert classify_critical_point(f, [0.0], [0.0]) == NOT_LOCAL_MIN


@pytest.mark.parametrize("name", ["double_well", "cubic", "square_plus_neg_abs", "abs", "cubic_on_interval"])
def test_classification_matches_brute_force(name):
    f = catalog.get(name)
    for v in (-0.7, 0.2, 0.9):
        for p in enumerate_critical_points(f, [v]):
            cls = classify_critical_point(f, [v], p.x)
            bf = brute_force_no_lower(lambda z: f.evaluate(z) - v * z[0], p.x)
            assert (cls == LOCAL_MIN) == bf


# composite critical pairs

def test_composite_examples():
    pair = solve(1.0, 0.0)
    assert pair.status == "CONVERGED"
    assert pair.x[0] == pytest.approx(1.0, abs=1e-10) and pair.lam[0] == pytest.approx(0.5, abs=1e-10)
    pair = solve(-1.0, 0.0, x0=-1.0)
    assert pair.x[0] == pytest.approx(-1.0, abs=1e-10) and pair.lam[0] == pytest.approx(0.5, abs=1e-10)
    assert solve(0.0, 0.0).status == "NON_ISOLATED"


def test_composite_against_grid_minimization():
    # min -x over x^2 <= 1 on a grid
    xs, _ = grid_argmins(lambda t: np.where(t ** 2 <= 1.0, -t, np.inf), -2.0, 2.0, nodes=40_001)
    assert xs[0] == pytest.approx(solve(1.0, 0.0).x[0], abs=1e-4)


@given(st.floats(-1, 1).filter(lambda v: abs(v) > 1e-3), st.floats(-1, 0.99))
def test_composite_matches_closed_form_kkt(v, y):
    pair = solve_composite_critical(zero(), nonpos(), circle_map(), [v], [y], [np.sign(v)], [0.5])
    xr, lr = constrained_kkt(v, y)
    assert pair.status == "CONVERGED"
    assert pair.x[0] == pytest.approx(xr, abs=1e-6)
    assert pair.lam[0] == pytest.approx(lr, rel=1e-6, abs=1e-6)
    assert max(pair.residuals) <= 1e-8


def test_qualification_examples():
    q = check_qualifications(zero(), nonpos(), circle_map(), [1.0], [0.0])
    assert q.bcq
    q = check_qualifications(zero(), nonpos(), SmoothMap([x1 ** 2]), [0.0], [0.0])
    assert not q.bcq
    q = check_qualifications(NormL1(1), catalog.square(), SmoothMap([x1 ** 3]), [0.0], [0.0])
    assert q.bcq


def test_residual_examples():
    P = CompositeProblem(zero(), nonpos(), circle_map(), np.array([1.0]), np.array([0.0]))
    pair = solve(1.0, 0.0)
    r = residual(pair, P)
    assert r.r_v == pytest.approx(0.0, abs=1e-10) and r.r_y == pytest.approx(0.0, abs=1e-10)
    bumped = CriticalPair(pair.x + 1e-3, pair.lam, None, None, None, None, "", 0)
    r = residual(bumped, P)
    assert r.r_v == pytest.approx(abs(1.0 - 2 * (1.0 + 1e-3) * 0.5), rel=1e-6)
    bad = CriticalPair(pair.x, -pair.lam, None, None, None, None, "", 0)
    r = residual(bad, P)
    assert r.r_y == np.inf and r.status == "NoMultiplierMatch"


def test_licq_multiplier_unique_under_restarts():
    rng = np.random.default_rng(9)
    v, y = 0.6, 0.2
    base = solve_composite_critical(zero(), nonpos(), circle_map(), [v], [y], [1.0], [0.5])
    assert base.qual_flags.licq_analogue and base.multiplier_unique
    lams = []
    for _ in range(20):
        x0 = base.x + rng.normal(scale=0.05, size=1)
        l0 = base.lam + rng.normal(scale=0.05, size=1)
        p = solve_composite_critical(zero(), nonpos(), circle_map(), [v], [y], x0, l0, extra_starts=())
        lams.append(p.lam[0])
    assert np.ptp(lams) <= 1e-6
