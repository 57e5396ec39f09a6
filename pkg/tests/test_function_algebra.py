import json

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from oracles import fd_jacobian
from tiltlab import catalog
from tiltlab.errors import ParseError
from tiltlab.function_algebra import (
    Indicator, MaxOfSmooth, NormL1, NormL2, NormLinf, Polynomial, SquaredComposite, Sum, evaluate,
    face_lattice, parse_function, relative_interior_contains, shift, tilt,
)
from tiltlab.polyhedra import Polyhedron
from tiltlab.polynomials import Poly, SmoothMap, real_roots, smooth_jet

coef = st.floats(-3, 3, allow_nan=False, allow_infinity=False)


@st.composite
def polys(draw, n=2, max_deg=3, max_terms=5):
    k = draw(st.integers(1, max_terms))
    terms = []
    for _ in range(k):
        e = draw(st.lists(st.integers(0, max_deg), min_size=n, max_size=n))
        terms.append((e, draw(coef)))
    return Poly(n, terms)


def nonneg_halfline():
    return Indicator(Polyhedron(np.array([[-1.0]]), np.array([0.0]), 1))


# evaluate / tilt / shift

def test_evaluate_examples():
    assert evaluate(NormL1(1), [0.0]) == 0.0
    assert evaluate(nonneg_halfline(), [-1.0]) == np.inf
    assert evaluate(SquaredComposite(NormL1(2)), [1.0, 2.0]) == 9.0


def test_tilt_examples():
    assert evaluate(tilt(NormL1(1), [0.5]), [1.0]) == 0.5
    assert evaluate(tilt(catalog.square(), [2.0]), [3.0]) == 3.0
    X = np.linspace(-3, 3, 61)[:, None]
    f = catalog.double_well()
    assert np.array_equal(tilt(f, [0.0]).evaluate_many(X), f.evaluate_many(X))


@pytest.mark.parametrize("name", sorted(catalog.CATALOG))
def test_tilt_identity_on_random_points(name):
    f = catalog.get(name)
    rng = np.random.default_rng(0)
    X = rng.uniform(-2, 2, size=(1000, f.n))
    v = rng.normal(size=f.n)
    lhs = tilt(f, v).evaluate_many(X)
    rhs = f.evaluate_many(X) - X @ v
    fin = np.isfinite(rhs)
    assert np.array_equal(np.isfinite(lhs), fin)
    assert np.array_equal(lhs[fin], rhs[fin])


def test_shift_composes_map():
    G = SmoothMap([Poly.variable(1, 0) ** 2 - Poly.constant(1, 1.0)])
    g = shift(NormL1(1), G, [0.5])
    assert evaluate(g, [2.0]) == pytest.approx(3.5)
    assert evaluate(g, [0.0]) == pytest.approx(0.5)


def test_indicator_of_empty_set_rejected():
    with pytest.raises(ValueError):
        Indicator(Polyhedron(np.array([[1.0], [-1.0]]), np.array([-1.0, -1.0]), 1))


@given(st.lists(st.floats(-5, 5), min_size=3, max_size=3))
def test_norms_agree_with_numpy(x):
    x = np.array(x)
    assert evaluate(NormL1(3), x) == pytest.approx(np.abs(x).sum())
    assert evaluate(NormL2(3), x) == pytest.approx(np.linalg.norm(x))
    assert evaluate(NormLinf(3), x) == pytest.approx(np.abs(x).max())


# face lattice and relative interiors

def test_face_lattice_counts():
    assert len(face_lattice(Polyhedron.box([-1.0], [1.0]))) == 3
    assert len(face_lattice(Polyhedron.box([0.0, 0.0], [1.0, 1.0]))) == 9
    assert len(face_lattice(Polyhedron.point([0.0]))) == 1
    dims = sorted(d for _, _, d in face_lattice(Polyhedron.box([0.0, 0.0], [1.0, 1.0])))
    assert dims == [0, 0, 0, 0, 1, 1, 1, 1, 2]


def test_face_closure_is_union_of_faces():
    P = Polyhedron.box([0.0, 0.0, 0.0], [1.0, 1.0, 1.0])
    faces = face_lattice(P)
    assert len(faces) == 27
    verts = P.vrep.vertices
    vertex_faces = {act for act, _, d in faces if d == 0}
    for act, M, d in faces:
        # vertices in the closure of a face are exactly those satisfying its active rows
        on = [v for v in verts if M.contains(v, 1e-9)]
        assert len(on) == 2 ** d
        for v in on:
            tight = tuple(i for i in range(P.A.shape[0]) if abs(P.A[i] @ v - P.b[i]) <= 1e-9)
            assert tight in vertex_faces


def test_relative_interior_examples():
    I = Polyhedron.box([-1.0], [1.0])
    assert relative_interior_contains(I, [0.0])
    assert not relative_interior_contains(I, [1.0])
    seg = Polyhedron.from_generators(np.array([[0.0, 0.0], [1.0, 0.0]]))
    assert relative_interior_contains(seg, [0.5, 0.0])
    assert not relative_interior_contains(seg, [0.5, 0.1])


@given(st.lists(st.floats(-2, 2), min_size=2, max_size=2))
def test_relative_interior_full_dimensional_is_strict_slack(p):
    P = Polyhedron(np.array([[1.0, 1.0], [-1.0, 0.0], [0.0, -1.0]]), np.array([1.0, 0.0, 0.0]), 2)
    p = np.array(p)
    slack = P.b - P.A @ p
    ri = relative_interior_contains(P, p)
    if ri:
        assert P.contains(p)
    if np.all(slack > 1e-6) or np.any(slack < -1e-6):
        assert ri == bool(np.all(slack > 0))


# smooth jets and polynomials

def test_smooth_jet_examples():
    x = Poly.variable(1, 0)
    val, J, form = smooth_jet(SmoothMap([x ** 2 - Poly.constant(1, 1.0)]), [1.0])
    assert val.tolist() == [0.0] and J.tolist() == [[2.0]]
    assert form(np.array([3.0])).tolist() == [18.0]
    a, b = Poly.variable(2, 0), Poly.variable(2, 1)
    _, J, form = smooth_jet(SmoothMap([a + b]), [0.0, 0.0])
    assert J.tolist() == [[1.0, 1.0]]
    assert form(np.array([1.0, -2.0])).tolist() == [0.0]
    _, _, form = smooth_jet(SmoothMap([x ** 3]), [2.0])
    assert form(np.array([1.0]))[0] == pytest.approx(12.0)
    # against central differences of the Jacobian, step 1e-5
    Jfd = fd_jacobian(lambda z: SmoothMap([x ** 3]).jacobian(z)[0], np.array([2.0]), 1e-5)
    assert Jfd[0, 0] == pytest.approx(12.0, rel=1e-6)


def test_smooth_jet_matches_finite_differences_at_random_points():
    a, b = Poly.variable(2, 0), Poly.variable(2, 1)
    G = SmoothMap([a ** 2 * b - a, b ** 3 + a * b, a ** 4 - 2.0 * b ** 2])
    rng = np.random.default_rng(1)
    for x in rng.uniform(-1.5, 1.5, size=(100, 2)):
        val, J, form = smooth_jet(G, x)
        Jfd = fd_jacobian(G.value, x, 1e-6)
        assert np.all(np.abs(J - Jfd) <= 1e-5 * (1 + np.abs(J)))
        u = rng.normal(size=2)
        # second directional derivative from a symmetric difference of values
        h = 1e-4
        sec = (G.value(x + h * u) - 2 * val + G.value(x - h * u)) / h ** 2
        assert np.all(np.abs(form(u) - sec) <= 1e-5 * (1 + np.abs(form(u))) + 1e-5)


@given(polys(), polys())
def test_poly_ring_laws(p, q):
    X = np.random.default_rng(2).uniform(-1, 1, size=(20, 2))
    assert np.allclose((p + q).eval_many(X), p.eval_many(X) + q.eval_many(X))
    assert np.allclose((p * q).eval_many(X), p.eval_many(X) * q.eval_many(X), atol=1e-9)
    assert (p - p).is_zero(1e-12)


@given(polys())
def test_poly_gradient_against_fd(p):
    rng = np.random.default_rng(3)
    for x in rng.uniform(-1, 1, size=(5, 2)):
        g = p.grad(x)
        h = 1e-6
        fd = np.array([(p(x + h * e) - p(x - h * e)) / (2 * h) for e in np.eye(2)])
        assert np.all(np.abs(g - fd) <= 1e-5 * (1 + np.abs(g)))
        H = p.hess(x)
        Hfd = np.array([(p.grad(x + h * e) - p.grad(x - h * e)) / (2 * h) for e in np.eye(2)])
        assert np.all(np.abs(H - Hfd) <= 1e-5 * (1 + np.abs(H)))


@given(st.lists(st.floats(-3, 3), min_size=1, max_size=4, unique=True))
def test_real_roots_recovers_known_roots(rs):
    rs = sorted(rs)
    if min(np.diff(rs), default=1.0) < 1e-2:
        return
    x = Poly.variable(1, 0)
    p = Poly.constant(1, 1.0)
    for r in rs:
        p = p * (x - Poly.constant(1, r))
    got = real_roots(p)
    assert len(got) == len(rs)
    assert np.allclose(np.sort(got), rs, atol=1e-6)


# JSON

@pytest.mark.parametrize("name", sorted(catalog.CATALOG))
def test_json_round_trip(name):
    f = catalog.get(name)
    doc = json.loads(json.dumps(f.to_json()))
    g = parse_function(doc)
    X = np.random.default_rng(4).uniform(-2, 2, size=(50, f.n))
    a, b = f.evaluate_many(X), g.evaluate_many(X)
    assert np.array_equal(np.isfinite(a), np.isfinite(b))
    assert np.allclose(a[np.isfinite(a)], b[np.isfinite(b)])


def test_parse_rejects_unknown_kind():
    with pytest.raises(ParseError):
        parse_function({"kind": "psd_cone", "n": 2})
    with pytest.raises(ParseError):
        parse_function({"kind": "polynomial", "n": 1})


def test_convexity_flags():
    assert NormL1(2).is_convex and SquaredComposite(NormL1(2)).is_convex
    assert not catalog.neg_abs().is_convex
    assert not catalog.double_well().is_convex
    assert Sum((NormL1(1), nonneg_halfline())).is_convex
    assert not MaxOfSmooth((Poly.variable(1, 0) ** 3, Poly.variable(1, 0))).is_convex
    assert Polynomial(Poly.variable(1, 0) ** 2).is_convex
