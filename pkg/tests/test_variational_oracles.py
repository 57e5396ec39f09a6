import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from tiltlab import catalog
from tiltlab import variational_oracles as vo
from tiltlab.function_algebra import (
    AffineFace, Indicator, MaxOfSmooth, NormL1, NormLinf, Polynomial, Precomposed, SquaredComposite, Sum,
)
from tiltlab.polyhedra import Polyhedron
from tiltlab.polynomials import Poly, SmoothMap
from tiltlab.terms import ConstraintSet

INF = np.inf


def nonneg():
    return Indicator(Polyhedron(np.array([[-1.0]]), np.array([0.0]), 1))


def orthant2():
    return Polyhedron(-np.eye(2), np.zeros(2), 2)


# prox

def test_prox_examples():
    assert np.allclose(vo.prox(NormL1(1), [2.0], 1.0), [[1.0]])
    assert np.allclose(vo.prox(nonneg(), [-3.0], 1.0), [[0.0]])
    assert np.allclose(vo.prox(catalog.square(), [1.0], 1.0), [[1.0 / 3.0]])


def test_prox_nonconvex_returns_all_sorted():
    # -|x| + r/2 (x - 0)^2 at z = 0 has minimizers ±1/r
    out = vo.prox(catalog.neg_abs(), [0.0], 1.0)
    assert len(out) == 2
    assert np.allclose(np.vstack(out).ravel(), [-1.0, 1.0])


@given(st.floats(-5, 5), st.floats(0.1, 10))
def test_prox_abs_is_soft_threshold(z, r):
    (p,) = vo.prox(NormL1(1), [z], r)
    assert p[0] == pytest.approx(np.sign(z) * max(abs(z) - 1.0 / r, 0.0), abs=1e-9)


# subdifferentials

def test_proximal_subdiff_examples():
    S = vo.proximal_subdiff(NormL1(1), [0.0])
    assert S.contains([-1.0]) and S.contains([1.0]) and not S.contains([1.01])
    S = vo.proximal_subdiff(SquaredComposite(NormL1(2)), [0.0, 0.0])
    assert S.contains([0.0, 0.0]) and not S.contains([1e-3, 0.0])
    S = vo.proximal_subdiff(nonneg(), [0.0])
    assert S.contains([-7.0]) and S.contains([0.0]) and not S.contains([0.1])


def test_limiting_subdiff_examples():
    S = vo.limiting_subdiff(NormL1(1), [0.0])
    assert S.contains([0.3]) and S.distance([2.0]) == pytest.approx(1.0)
    S = vo.limiting_subdiff(catalog.neg_abs(), [0.0])
    assert len(S.pieces) == 2
    assert S.contains([-1.0]) and S.contains([1.0]) and not S.contains([0.0])
    assert vo.proximal_subdiff(catalog.neg_abs(), [0.0]).is_empty
    S = vo.limiting_subdiff(catalog.square(), [1.0])
    assert S.contains([2.0]) and not S.contains([2.001])


def test_neg_abs_limiting_matches_attentive_sampling():
    rng = np.random.default_rng(0)
    pairs = vo.f_attentive_pairs(catalog.neg_abs(), [0.0], 1e-6, 400, rng)
    seen = {round(float(g[0]), 9) for _, g in pairs}
    assert seen == {-1.0, 1.0}


def test_horizon_subdiff_examples():
    assert vo.horizon_subdiff(catalog.square(), [0.7]).is_trivial()
    H = vo.horizon_subdiff(nonneg(), [0.0])
    assert H.contains([-5.0]) and not H.contains([1.0])
    H = vo.horizon_subdiff(Sum((NormL1(1), nonneg())), [0.0])
    assert H.contains([-5.0]) and not H.contains([1.0])
    # limits of t*g with g ∈ ∂f(0) = (-inf, 1] and t -> 0 sweep out (-inf, 0]
    S = vo.limiting_subdiff(Sum((NormL1(1), nonneg())), [0.0])
    for t in (1e-2, 1e-4, 1e-6):
        for g in (1.0, -1.0 / t, -5.0 / t):
            assert S.contains([g])
            assert H.contains([t * g], tol=1e-5) == (t * g <= 1e-5)
    assert not S.contains([1.0 + 1e-6])


def test_inclusion_chain_proximal_in_limiting():
    lib = [(NormL1(1), [0.0]), (catalog.neg_abs(), [0.0]), (catalog.square_plus_neg_abs(), [0.0]),
           (SquaredComposite(NormL1(2)), [0.0, 0.0]), (catalog.max_xy(), [1.0, 1.0]),
           (NormLinf(2), [1.0, -1.0]), (catalog.cubic_on_interval(), [1.0])]
    for f, x in lib:
        assert vo.proximal_subdiff(f, x).is_subset_of(vo.limiting_subdiff(f, x))


# subderivatives

def test_subderivative_examples():
    assert vo.subderivative(NormL1(1), [0.0], [1.0]) == 1.0
    assert vo.subderivative(nonneg(), [0.0], [-1.0]) == INF
    assert vo.subderivative(catalog.square(), [1.0], [2.0]) == 4.0


@pytest.mark.parametrize("f,x", [(NormL1(2), [0.0, 1.0]), (NormLinf(2), [1.0, 1.0]),
                                 (catalog.max_xy(), [0.5, 0.5]), (SquaredComposite(NormL1(2)), [1.0, 0.0])])
def test_subderivative_is_support_function(f, x):
    S = vo.proximal_subdiff(f, x)
    rng = np.random.default_rng(5)
    for u in rng.normal(size=(100, f.n)):
        assert vo.subderivative(f, x, u) == pytest.approx(S.support(u), abs=1e-9)


def test_critical_cone_examples():
    K = vo.critical_cone(NormL1(1), [0.0], [0.5])
    assert K.is_trivial()
    K = vo.critical_cone(NormL1(1), [0.0], [1.0])
    assert K.contains([3.0]) and not K.contains([-1.0])
    K = vo.critical_cone(Indicator(orthant2()), [0.0, 1.0], [-1.0, 0.0])
    assert K.contains([0.0, 1.0]) and K.contains([0.0, -1.0]) and not K.contains([0.1, 0.0])
    assert K.dim == 1


def test_critical_cone_equals_manifold_tangent():
    # |x| at v in (-1,1): M = {0}; (|x|+|y|)^2 at tilt (0.4, 0.1): M = x-axis
    assert vo.critical_cone(NormL1(1), [0.0], [0.3]).is_trivial()
    f = SquaredComposite(NormL1(2))
    K = vo.critical_cone(f, [0.2, 0.0], [0.4, 0.1])
    assert K.contains([1.0, 0.0]) and K.contains([-1.0, 0.0]) and not K.contains([0.0, 1e-3])
    # first-order subderivative equals <v, u> along the tangent space
    for u in ([1.0, 0.0], [-2.0, 0.0]):
        assert vo.subderivative(f, [0.2, 0.0], u) == pytest.approx(0.4 * u[0])


# second order

def test_tangent_set_examples():
    T, T2 = vo.tangent_sets(Polyhedron(np.array([[-1.0]]), np.array([0.0]), 1), [0.0], [0.0])
    assert T.contains([1.0]) and not T.contains([-1.0])
    assert T2.contains([2.0]) and not T2.contains([-0.5])
    a, b = Poly.variable(2, 0), Poly.variable(2, 1)
    epi = ConstraintSet(2, [a ** 2 - b])
    _, T2 = vo.tangent_sets(epi, [0.0, 0.0], [1.0, 0.0])
    assert T2.contains([5.0, 2.0]) and T2.contains([-1.0, 3.0]) and not T2.contains([0.0, 1.99])
    _, T2 = vo.tangent_sets(orthant2(), [0.0, 0.0], [1.0, 0.0])
    assert T2.contains([-4.0, 0.0]) and T2.contains([3.0, 1.0]) and not T2.contains([0.0, -0.1])


def test_parabola_second_order_tangent_by_membership_sampling():
    # w in T² iff the arc t u + t²/2 w stays within o(t²) of b >= a²
    for w, inside in (([0.0, 2.5], True), ([1.0, 1.5], False)):
        for t in (1e-2, 1e-3):
            p = t * np.array([1.0, 0.0]) + 0.5 * t ** 2 * np.array(w)
            gap = p[1] - p[0] ** 2
            assert (gap >= -1e-3 * t ** 2) == inside


def test_parabolic_subderivative_examples():
    assert vo.parabolic_subderivative(catalog.square(), [1.0], [1.0], [3.0]) == pytest.approx(8.0)
    assert vo.parabolic_subderivative(NormL1(1), [0.0], [1.0], [-5.0]) == pytest.approx(-5.0)
    assert vo.parabolic_subderivative(nonneg(), [0.0], [0.0], [1.0]) == pytest.approx(0.0)
    assert vo.numeric_parabolic_subderivative(NormL1(1), [0.0], [1.0], [-5.0]) == pytest.approx(-5.0, rel=1e-4)


def _composite_library():
    a, b = Poly.variable(2, 0), Poly.variable(2, 1)
    G = SmoothMap([a ** 2 - b, a + b ** 2 - Poly.constant(2, 1.0)])
    return {
        "l1_of_map": Precomposed(NormL1(2), G),
        "max_of_map": Precomposed(MaxOfSmooth((Poly.variable(2, 0), Poly.variable(2, 1))), G),
        "max_quadratics": MaxOfSmooth((a ** 2 + b, a - b ** 2, -1.0 * a * b)),
        "l1_squared": SquaredComposite(NormL1(2)),
        "linf_plus_quad": Sum((NormLinf(2), Polynomial(a * b))),
    }


@pytest.mark.parametrize("name", sorted(_composite_library()))
def test_closed_form_vs_numeric_estimators(name):
    f = _composite_library()[name]
    rng = np.random.default_rng(11)
    for k in range(20):
        x = rng.uniform(-1, 1, size=2)
        u, w = rng.normal(size=2), rng.normal(size=2)
        assert vo.agree(vo.subderivative(f, x, u), vo.numeric_subderivative(f, x, u))
        assert vo.agree(vo.parabolic_subderivative(f, x, u, w), vo.numeric_parabolic_subderivative(f, x, u, w))


def test_inf_parabolic_on_manifold():
    f = SquaredComposite(NormL1(2))
    M = AffineFace.from_equations([[0.0, 1.0]], [0.0])
    val = vo.inf_parabolic(f, [0.2, 0.0], [1.0, 0.0], [0.4, 0.1], M)
    assert val == pytest.approx(2.0)


@pytest.mark.parametrize("r", [10.0, 100.0, 1000.0])
def test_prox_consistency_for_proximal_subgradients(r):
    f = catalog.square_plus_neg_abs()
    for x in ([0.5], [-0.7], [1.2]):
        g = vo.proximal_subdiff(f, x).pieces[0].vrep.vertices[0]
        out = vo.prox(f, np.asarray(x) + g / r, r)
        assert any(np.allclose(p, x, atol=1e-8) for p in out)
