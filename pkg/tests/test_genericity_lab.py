import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import brute_force_no_lower, double_well_transition
from tiltlab import catalog
from tiltlab.criticality import enumerate_critical_points
from tiltlab.function_algebra import AffineFace, Indicator, Polynomial
from tiltlab.genericity_lab import (
    CompositeSpec, SamplingConfig, TiltProblem, build_selection_atlas, finite_identification_test,
    probe_flags, projection_identifiability_check, prox_regularity_check, run_genericity_experiment,
    sample_perturbations, second_order_equivalence_check, sharpness_holds, stable_quadratic_growth_check,
    strict_complementarity_check, strict_complementarity_sweep, weak_critical_value_probe,
)
from tiltlab.polyhedra import Polyhedron
from tiltlab.polynomials import Poly, SmoothMap
from tiltlab import variational_oracles as vo

x1 = Poly.variable(1, 0)


# sampling

def test_sampling_is_reproducible():
    cfg = SamplingConfig(box=[(-2, 2)], count=5, master_seed=42)
    a = [s.v for s in sample_perturbations(cfg)]
    b = [s.v for s in sample_perturbations(cfg)]
    assert len(a) == 5 and all(np.array_equal(p, q) for p, q in zip(a, b))
    assert not np.array_equal(a[0], sample_perturbations(cfg, master_seed=43)[0].v)


def test_sample_depends_only_on_seed_and_index():
    small = sample_perturbations(SamplingConfig(box=[(-2, 2)], count=3, master_seed=7))
    large = sample_perturbations(SamplingConfig(box=[(-2, 2)], count=50, master_seed=7))
    assert all(np.array_equal(p.v, q.v) and p.seed == q.seed for p, q in zip(small, large))


def test_grid_mode_has_endpoints_and_equal_spacing():
    S = sample_perturbations(SamplingConfig(box=[(-2, 2)], grid_nodes=2001))
    v = np.array([s.v[0] for s in S])
    assert len(v) == 2001 and v[0] == -2.0 and v[-1] == 2.0
    assert np.allclose(np.diff(v), 4.0 / 2000, atol=1e-12)


@given(st.integers(0, 2**32 - 1))
@settings(max_examples=10)
def test_two_dimensional_samples_stay_in_box(seed):
    box = [(-1.0, 3.0), (0.5, 0.75)]
    for s in sample_perturbations(SamplingConfig(box=box, count=100, master_seed=seed)):
        assert all(lo <= c <= hi for c, (lo, hi) in zip(s.v, box))


def test_exclusion_radius_and_empty_box():
    S = sample_perturbations(SamplingConfig(box=[(-1, 1)], count=200, exclude_v_radius=0.5))
    assert len(S) == 200 and all(abs(s.v[0]) >= 0.5 for s in S)
    with pytest.raises(ValueError):
        SamplingConfig(box=[(1, 1)], count=3)


# strict complementarity and prox-regularity

def test_strict_complementarity_examples():
    assert strict_complementarity_check(catalog.abs1(), [0.0], [0.5])
    assert not strict_complementarity_check(catalog.abs1(), [0.0], [1.0])


def test_strict_complementarity_sweep_fails_only_at_kinks():
    nodes = np.linspace(-2, 2, 2001)
    ok = strict_complementarity_sweep(catalog.abs1(), nodes)
    bad = nodes[~ok]
    # closed form: ∂f_v(0) = [-1-v, 1-v] has 0 in its interior iff |v| < 1
    assert len(bad) == 2 and np.allclose(np.abs(bad), 1.0, atol=1e-9)


def test_prox_regularity_on_library():
    assert prox_regularity_check(catalog.abs1(), [0.0], [0.2]) is not None
    assert prox_regularity_check(catalog.double_well(), [0.0], [0.0]) is not None


# identification

def test_identification_examples():
    tr = finite_identification_test(catalog.abs1(), [0.3], [0.0])
    assert tr.verdict == "Identified" and tr.manifold.dim == 0 and tr.hit_index is not None
    # the tail from hit_index on sits exactly at 0
    assert all(abs(p[0]) <= 1e-8 for p in tr.iterates[tr.hit_index:][:5])
    tr = finite_identification_test(catalog.l1_squared_2d(), [0.0, 0.0], [0.0, 0.0])
    assert tr.verdict == "NoIdentifiableManifold"
    tr = finite_identification_test(catalog.square(), [0.0], [0.0])
    assert tr.verdict == "Identified" and tr.hit_index == 0 and tr.manifold.dim == 1


def test_identified_axis_manifold_for_l1_squared():
    f = catalog.l1_squared_2d()
    rng = np.random.default_rng(2)
    for k in range(10):
        v = rng.uniform(-1, 1, size=2)
        (p,) = enumerate_critical_points(f, v)
        tr = finite_identification_test(f, v, p.x, seed=k)
        assert tr.verdict == "Identified" and tr.manifold.dim == 1
        axis = np.eye(2)[int(np.argmax(np.abs(v)))]
        T = tr.manifold.tangent_basis(p.x)
        assert abs(abs(T[0] @ axis) - 1.0) <= 1e-8


def test_sharpness_rank_test_where_identified_and_strictly_complementary():
    f = catalog.l1_squared_2d()
    rng = np.random.default_rng(4)
    checked = 0
    for k in range(15):
        v = rng.uniform(-1, 1, size=2)
        (p,) = enumerate_critical_points(f, v)
        tr = finite_identification_test(f, v, p.x, seed=k)
        if tr.verdict == "Identified" and strict_complementarity_check(f, p.x, v):
            assert sharpness_holds(f, p.x, tr.manifold)
            checked += 1
    assert checked >= 10


def test_local_minimality_agrees_with_restriction_to_identified_manifold():
    f = catalog.l1_squared_2d()
    v = np.array([0.4, 0.1])
    (p,) = enumerate_critical_points(f, v)
    tr = finite_identification_test(f, v, p.x)
    assert tr.verdict == "Identified"
    full = brute_force_no_lower(lambda z: f.evaluate(z) - v @ z, p.x)
    # f_v + δ_M, parametrized along the tangent line of M
    T = tr.manifold.tangent_basis(p.x)[0]
    restricted = brute_force_no_lower(lambda t: f.evaluate(p.x + t[0] * T) - v @ (p.x + t[0] * T), np.zeros(1))
    assert full and restricted


# strong regularity probe

def test_probe_examples():
    r = weak_critical_value_probe(catalog.quartic(), [0.0])
    assert not r.strongly_regular
    r = weak_critical_value_probe(catalog.square(), [0.3])
    assert r.strongly_regular and r.lipschitz_estimate == pytest.approx(0.5, abs=1e-6)
    assert not weak_critical_value_probe(catalog.abs1(), [1.0]).strongly_regular


@given(st.floats(-3, 3))
@settings(max_examples=15)
def test_probe_square_any_tilt(v):
    r = weak_critical_value_probe(catalog.square(), [v])
    assert r.strongly_regular and r.lipschitz_estimate == pytest.approx(0.5, abs=1e-6)


def test_probe_flags_double_well_discriminant():
    vt = double_well_transition()
    assert not weak_critical_value_probe(catalog.double_well(), [vt]).strongly_regular
    assert weak_critical_value_probe(catalog.double_well(), [0.5]).strongly_regular


# growth

def test_growth_examples():
    g = stable_quadratic_growth_check(catalog.square(), [0.0], [0.0])
    assert g.ok and g.alpha == 2.0
    g = stable_quadratic_growth_check(catalog.abs1(), [0.0], [0.0])
    # (1-|w|)|x| >= (α/2) x² on |x| <= 1e-2 with |w| <= 0.1 allows α <= 180; largest dyadic is 128
    assert g.ok and g.alpha == 128.0
    assert not stable_quadratic_growth_check(Polynomial(-1.0 * x1 ** 2), [0.0], [0.0]).ok


# equivalence

def test_equivalence_examples():
    assert second_order_equivalence_check(catalog.square(), [0.0], [0.0]).code() == "TTTT"
    t = second_order_equivalence_check(catalog.abs1(), [0.5], [0.0], AffineFace.from_equations([[1.0]], [0.0]))
    assert t.code() == "TTTT"
    t = second_order_equivalence_check(catalog.quartic(), [0.0], [0.0])
    assert t.i is True and t.iii is False and t.iv is False and t.ii is not True
    # the violation sits at a tilt the probe flags
    assert not weak_critical_value_probe(catalog.quartic(), [0.0]).strongly_regular


def test_equivalence_consistent_on_double_well_tilts():
    f = catalog.double_well()
    vt = double_well_transition()
    for v in np.linspace(-1.4, 1.4, 7):
        assert abs(abs(v) - vt) > 1e-6
        for p in enumerate_critical_points(f, [v]):
            assert second_order_equivalence_check(f, [v], p.x).consistent


# atlas

def test_atlas_double_well():
    A = build_selection_atlas(catalog.double_well(), [np.linspace(-3, 3, 601)])
    vt = double_well_transition()
    assert A.N_max == 3 and A.separated and A.coverage >= 0.99
    assert np.allclose(sorted(A.transition_values), [-vt, vt], atol=1e-8)
    step = 6.0 / 600
    flagged = A.nodes[A.transition_nodes, 0]
    assert np.all(np.abs(np.abs(flagged) - vt) <= step)
    three = [r for r in A.regions if r["cardinality"] == 3]
    assert len(three) == 1
    lo, hi = three[0]["bounds"][0][0], three[0]["bounds"][1][0]
    assert lo < 0 < hi and abs(-vt - lo) <= step and abs(vt - hi) <= step


def test_atlas_abs_and_square():
    A = build_selection_atlas(catalog.abs1(), [np.linspace(-2, 2, 601)])
    assert A.N_max == 1
    assert np.allclose(A.transition_values, [-1.0, 1.0], atol=1e-6)
    for r in A.regions:
        lo, hi = r["bounds"][0][0], r["bounds"][1][0]
        assert r["cardinality"] == (1 if lo > -1 and hi < 1 else 0)
    A = build_selection_atlas(catalog.square(), [np.linspace(-2, 2, 101)])
    assert A.N_max == 1 and len(A.regions) == 1 and A.regions[0]["cardinality"] == 1


@pytest.mark.parametrize("name,lo,hi", [("double_well", -3, 3), ("abs", -2, 2), ("square", -2, 2)])
def test_atlas_and_probe_flag_the_same_nodes(name, lo, hi):
    f = catalog.get(name)
    A = build_selection_atlas(f, [np.linspace(lo, hi, 301)])
    flags = probe_flags(f, A.nodes)
    assert set(np.flatnonzero(flags)) == set(A.transition_nodes)


# projections

def test_projection_identifiability_examples():
    orth = Polyhedron(-np.eye(2), np.zeros(2), 2)
    assert projection_identifiability_check(orth, [0.0, 1.0], [-1.0, 0.0],
                                            AffineFace.from_equations([[1.0, 0.0]], [0.0]))
    half = Polyhedron(np.array([[-1.0]]), np.zeros(1), 1)
    assert projection_identifiability_check(half, [0.0], [-1.0], AffineFace.from_equations([[1.0]], [0.0]))
    assert projection_identifiability_check(orth, [0.0, 0.0], [-1.0, -1.0],
                                            AffineFace.from_equations(np.eye(2), np.zeros(2)))
    # wrong manifold for this normal: the line {x = 0} misses P_Q near (-λ, -λ)
    assert not projection_identifiability_check(orth, [0.0, 0.0], [-1.0, -1.0],
                                                AffineFace.from_equations([[1.0, 0.0]], [0.0]))


# experiments

def test_abs_random_sweep_failure_set():
    R = run_genericity_experiment(TiltProblem(catalog.abs1()),
                                  SamplingConfig(box=[(-2, 2)], count=1000, master_seed=0), jobs=1)
    assert R.failure_fraction <= 0.005
    assert all(min(abs(v[0] - 1), abs(v[0] + 1)) <= 1e-6 for v in R.failure_set)
    assert R.N_max == 1


def test_square_sweep_all_flags_true():
    R = run_genericity_experiment(TiltProblem(catalog.square()),
                                  SamplingConfig(box=[(-2, 2)], count=20, master_seed=3), jobs=1)
    assert R.N_max == 1 and R.failure_set == []
    for rec in R.samples:
        (p,) = rec["points"]
        assert p["strict_complementarity"] and p["prox_regular"] and p["strongly_regular"]
        assert p["stable_growth"] and p["alpha"] == 2.0 and p["equivalence"] == "TTTT"


def test_composite_sweep_unique_pairs():
    spec = CompositeSpec(Polynomial(Poly(1)), Indicator(Polyhedron(np.array([[1.0]]), np.zeros(1), 1)),
                         SmoothMap([x1 ** 2 - Poly.constant(1, 1.0)]))
    cfg = SamplingConfig(box=[(-1, 1)], y_box=[(-1, 1)], count=40, master_seed=5, exclude_v_radius=1e-3)
    R = run_genericity_experiment(spec, cfg, jobs=1)
    assert R.failure_set == []
    for rec in R.samples:
        assert rec["status"] == "CONVERGED" and rec["multiplier_unique"]
        assert rec["lambda"][0] > 0 and rec["strict_complementarity"] and rec["qual_flags"]["bcq"]


def test_report_is_deterministic():
    cfg = SamplingConfig(box=[(-2, 2)], count=15, master_seed=11)
    a = run_genericity_experiment(TiltProblem(catalog.double_well()), cfg, jobs=1).to_json()
    b = run_genericity_experiment(TiltProblem(catalog.double_well()), cfg, jobs=1).to_json()
    assert a == b


def test_flags_recomputed_not_inferred():
    # strict complementarity from the subdifferential oracle matches the closed form regardless of identification
    f = catalog.abs1()
    for v in (0.2, 0.99, 1.0):
        S = vo.proximal_subdiff(f, [0.0])
        assert strict_complementarity_check(f, [0.0], [v]) == (abs(v) < 1)
        assert S.contains([v]) == (abs(v) <= 1)
