"""Perturbation experiments: strict complementarity, identification, strong regularity,
stable growth, second-order equivalences and selection atlases.
"""
from __future__ import annotations

import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from .criticality import (
    ACCEPT_TOL, LOCAL_MIN, NOT_LOCAL_MIN, _ball_samples, check_qualifications, classify_critical_point,
    enumerate_critical_points, local_critical_points, pattern_manifold, solve_composite_critical,
)
from .errors import DomainError, EmptySetError, EnumerationError, NotExactError
from .function_algebra import AffineFace, FunctionExpr, ManifoldSpec, as_point, tilt
from .polyhedra import Ball, Polyhedron
from .polynomials import SmoothMap
from .terms import ConstraintTerm, L2Term, lower
from . import variational_oracles as vo

GROWTH_RHOS = (1e-1, 1e-2, 1e-3, 1e-4, 1e-5, 1e-6, 1e-7)
PROBE_SCALES = (1e-2, 1e-3, 1e-4)
PROBE_STARTS = 8
PROBE_DESCEND = 4  # smallest window is (1e-6, 1e-7, 1e-8)
POSITIVE_TOL = 1e-8


# sampling

@dataclass
class SamplingConfig:
    box: list
    count: int | None = None
    grid_nodes: int | None = None
    master_seed: int = 0
    y_box: list | None = None
    exclude_v_radius: float = 0.0

    def __post_init__(self):
        self.box = [tuple(map(float, b)) for b in self.box]
        if self.y_box is not None:
            self.y_box = [tuple(map(float, b)) for b in self.y_box]
        for lo, hi in self.box + (self.y_box or []):
            if not lo < hi:
                raise ValueError(f"empty sampling box [{lo}, {hi}]")
        if (self.count is None) == (self.grid_nodes is None):
            raise ValueError("give exactly one of count and grid_nodes")

    @property
    def mode(self) -> str:
        return "grid" if self.grid_nodes is not None else "random"


@dataclass
class PerturbationSample:
    v: np.ndarray
    y: np.ndarray | None
    seed: int
    index: int

    def to_json(self):
        return {"index": self.index, "seed": self.seed, "v": self.v.tolist(),
                "y": None if self.y is None else self.y.tolist()}


def _child_seed(master_seed: int, index: int) -> int:
    ss = np.random.SeedSequence(master_seed, spawn_key=(index,))
    return int(ss.generate_state(1, np.uint64)[0])


def sample_perturbations(config: SamplingConfig, master_seed: int | None = None) -> list:
    """Uniform samples on the box (or a tensor grid); sample i depends only on (master seed, i)."""
    seed = config.master_seed if master_seed is None else master_seed
    lo = np.array([b[0] for b in config.box])
    hi = np.array([b[1] for b in config.box])
    ylo = yhi = None
    if config.y_box is not None:
        ylo = np.array([b[0] for b in config.y_box])
        yhi = np.array([b[1] for b in config.y_box])
    out = []
    if config.grid_nodes is not None:
        axes = [np.linspace(a, b, config.grid_nodes) for a, b in config.box]
        mesh = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, lo.size)
        for i, v in enumerate(mesh):
            s = _child_seed(seed, i)
            y = None
            if ylo is not None:
                y = np.random.default_rng(s).uniform(ylo, yhi)
            out.append(PerturbationSample(v.copy(), y, s, i))
        return out
    for i in range(config.count):
        s = _child_seed(seed, i)
        rng = np.random.default_rng(s)
        v = rng.uniform(lo, hi)
        # rejection keeps the sample count exact and index i still depends on (seed, i) only
        while np.linalg.norm(v) < config.exclude_v_radius:
            v = rng.uniform(lo, hi)
        y = rng.uniform(ylo, yhi) if ylo is not None else None
        out.append(PerturbationSample(v, y, s, i))
    return out


# strict complementarity and prox-regularity

def strict_complementarity_check(f: FunctionExpr, x, v, tol: float = 1e-9) -> bool:
    """0 ∈ ri ∂_p f_v(x), i.e. v in the relative interior of the proximal subdifferential."""
    S = vo.proximal_subdiff(f, x)
    if S.is_empty:
        return False
    return S.relative_interior_contains(as_point(v, f.n), tol)


def strict_complementarity_sweep(f: FunctionExpr, nodes) -> np.ndarray:
    """Per tilt: True unless some critical point of f_v fails strict complementarity."""
    ok = np.ones(len(nodes), dtype=bool)
    for k, v in enumerate(nodes):
        for p in enumerate_critical_points(f, np.atleast_1d(v)):
            if not strict_complementarity_check(f, p.x, np.atleast_1d(v)):
                ok[k] = False
                break
    return ok


def _graph_pairs(f, x, v, radius, count, rng, window):
    """Subgradient graph points (x_i, g_i) near (x, v) with f(x_i) near f(x)."""
    n = f.n
    fx = f.evaluate(x)
    X = x[None, :] + radius * _ball_samples(n, count, int(rng.integers(2**31)))
    X = np.vstack([x[None, :], X])
    vals = f.evaluate_many(X)
    keep = np.isfinite(vals) & (np.abs(vals - fx) <= 1e-2)
    pairs = []
    for xi in X[keep]:
        try:
            S = vo.proximal_subdiff(f, xi)
        except (NotExactError, DomainError):
            continue
        for P in S.pieces:
            if isinstance(P, Ball):
                gs = [P.center]
            else:
                vr = P.vrep
                gs = list(vr.vertices)
                for d in list(vr.rays) + list(vr.lines) + [-l for l in vr.lines]:
                    gs += [g + t * d for g in vr.vertices for t in (0.1, 1.0)]
            pairs += [(xi, np.asarray(g)) for g in gs if np.linalg.norm(g - v) <= window]
    return pairs


def prox_regularity_check(f: FunctionExpr, x, v, rs=(1.0, 10.0, 100.0), radius: float = 1e-2,
                          count: int = 200, seed: int = 0, window: float = 0.5):
    """Smallest r in rs making the localized graph of ∂f + rI monotone on sampled pairs (None if none)."""
    x = as_point(x, f.n)
    v = as_point(v, f.n)
    pairs = _graph_pairs(f, x, v, radius, count, np.random.default_rng(seed), window)
    if len(pairs) < 2:
        return rs[0]
    X = np.array([p[0] for p in pairs])
    G = np.array([p[1] for p in pairs])
    dX = X[:, None, :] - X[None, :, :]
    dG = G[:, None, :] - G[None, :, :]
    ip = np.einsum("ijk,ijk->ij", dG, dX)
    sq = np.einsum("ijk,ijk->ij", dX, dX)
    for r in rs:
        if np.all(ip + r * sq >= -1e-10):
            return r
    return None


# identification

@dataclass
class IdentificationTrace:
    iterates: list
    manifold: ManifoldSpec | None
    hit_index: int | None
    verdict: str
    method: str = "prox"
    # every orbit of the ring; `iterates` is the one identified last
    orbits: list = field(default_factory=list)

    def to_json(self):
        return {"verdict": self.verdict, "hit_index": self.hit_index, "method": self.method,
                "manifold": None if self.manifold is None else self.manifold.to_json(),
                "iterate_count": len(self.iterates), "orbit_count": len(self.orbits)}


def _ring(x, radius, count, n, seed):
    if n == 1:
        fr = radius * np.array([1.0, 0.5, 0.25, 0.125])
        return [x + np.array([s * t]) for t in fr for s in (1.0, -1.0)][:count]
    rng = np.random.default_rng(seed)
    if n == 2:
        off = rng.uniform(0, 2 * np.pi / count)
        ang = off + 2 * np.pi * np.arange(count) / count
        return [x + radius * np.array([np.cos(a), np.sin(a)]) for a in ang]
    D = rng.normal(size=(count, n))
    D /= np.linalg.norm(D, axis=1)[:, None]
    return [x + radius * d for d in D]


def smooth_on_manifold(f: FunctionExpr, x, M: ManifoldSpec, radius: float = 1e-3, count: int = 64,
                       seed: int = 0) -> bool:
    """Jet sampling: one smooth selection of every term represents f on M near x."""
    L = lower(f)
    x = as_point(x, f.n)
    rng = np.random.default_rng(seed)
    B = M.tangent_basis(x)
    if B.shape[0] == 0:
        return True
    Z = [M.project(x + radius * rng.uniform(-1, 1, B.shape[0]) @ B) for _ in range(count)]
    Z = [z for z in Z if np.linalg.norm(z - x) <= 4 * radius and M.contains(z, 1e-9)]
    if not Z:
        return False
    Z = np.array(Z + [x])
    if not np.all(np.isfinite(f.evaluate_many(Z))):
        return False
    for t in L.terms:
        if isinstance(t, ConstraintTerm):
            continue
        pats = [set(t.pattern(z)) for z in Z]
        if isinstance(t, L2Term):
            if len({frozenset(q) for q in pats}) > 1:
                return False
        elif not set.intersection(*pats):
            return False
    return True


def _prox_orbit(ft, x0, r, iters):
    xs = [x0]
    x = x0
    for _ in range(iters):
        cands = vo.prox(ft, x, r)
        nxt = min(cands, key=lambda c: float(np.linalg.norm(c - x)))
        nxt = nxt + 0.0
        xs.append(nxt)
        if np.linalg.norm(nxt - x) <= 1e-15 * (1 + np.linalg.norm(x)):
            break
        x = nxt
    return xs


def _default_candidates(f, x, tail_points):
    cands = []
    seen = set()
    from .criticality import active_pattern

    for z in [x] + tail_points:
        pat = active_pattern(f, z)
        if pat in seen:
            continue
        seen.add(pat)
        try:
            cands.append(pattern_manifold(f, z, pat))
        except ValueError:
            continue
    cands.append(AffineFace.whole_space(f.n))
    return cands


def finite_identification_test(f: FunctionExpr, v, x, candidates=None, r: float = 1.0,
                               iters: int = 500, ring: int = 8, radius: float = 1e-2,
                               window: int = 100, seed: int = 0) -> IdentificationTrace:
    """Proximal-point iterations on f_v from a ring around x; the manifold capturing every tail."""
    from .criticality import active_pattern

    v = as_point(v, f.n)
    x = as_point(x, f.n)
    ft = tilt(f, v)
    starts = _ring(x, radius, ring, f.n, seed)
    orbits = []
    try:
        for s in starts:
            orbits.append(_prox_orbit(ft, s, r, iters))
    except (NotExactError, EnumerationError) as exc:
        return IdentificationTrace([], None, None, "Inconclusive", f"prox failed: {exc}")
    finals = [o[-1] for o in orbits]
    converged = all(np.linalg.norm(z - x) <= 1e-6 for z in finals)
    if not converged:
        return _identify_by_sampling(f, v, x, candidates, seed)
    # an orbit that stopped early sits at a fixed point: its tail is that point
    tails = [o[-window:] if len(o) > iters else o[-1:] for o in orbits]
    tail_points = [z for t in tails for z in t]
    patterns = {active_pattern(f, z) for z in tail_points}
    if candidates is None:
        candidates = _default_candidates(f, x, tail_points)
        if len(patterns) > 1:
            # tails keep switching strata: only a manifold holding all of them can work
            candidates = [M for M in candidates if M.dim == f.n]
    good = []
    for M in candidates:
        if not M.contains(x, 1e-8):
            continue
        if not all(M.contains(z, 1e-8) for z in tail_points):
            continue
        if not smooth_on_manifold(f, x, M, seed=seed):
            continue
        good.append(M)
    if not good:
        return IdentificationTrace(max(orbits, key=len), None, None, "NoIdentifiableManifold", orbits=orbits)
    M = min(good, key=lambda m: m.dim)
    hit, slowest = -1, orbits[0]
    for o in orbits:
        k = len(o)
        while k > 0 and M.contains(o[k - 1], 1e-8):
            k -= 1
        if k > hit:
            hit, slowest = k, o
    return IdentificationTrace(slowest, M, hit, "Identified", orbits=orbits)


def _identify_by_sampling(f, v, x, candidates, seed, radius=1e-3, window=1e-2):
    # x repels the proximal iteration (not a minimizer): test the f-attentive definition directly
    pairs = _graph_pairs(f, x, v, radius, 400, np.random.default_rng(seed), window)
    pts = [p[0] for p in pairs]
    if candidates is None:
        try:
            candidates = [pattern_manifold(f, x)]
        except ValueError:
            return IdentificationTrace(pts, None, None, "NoIdentifiableManifold", "sampling")
    good = [M for M in candidates if M.contains(x, 1e-8) and all(M.contains(z, 1e-8) for z in pts)
            and smooth_on_manifold(f, x, M, seed=seed)]
    if not good:
        return IdentificationTrace(pts, None, None, "NoIdentifiableManifold", "sampling")
    M = min(good, key=lambda m: m.dim)
    return IdentificationTrace(pts, M, 0, "Identified", "sampling")


def sharpness_holds(f: FunctionExpr, x, M: ManifoldSpec) -> bool:
    """par ∂_p f(x) equals the normal space of M at x (rank test)."""
    S = vo.proximal_subdiff(f, x)
    P = S.para_basis()
    N = M.normal_basis(as_point(x, f.n))
    if P.shape[0] != N.shape[0]:
        return False
    if P.shape[0] == 0:
        return True
    return np.linalg.matrix_rank(np.vstack([P, N]), tol=1e-7) == P.shape[0]


# strong regularity

@dataclass
class ProbeResult:
    strongly_regular: bool
    lipschitz_estimate: float
    branch_count: int
    reason: str = ""

    def to_json(self):
        return {"strongly_regular": self.strongly_regular, "lipschitz_estimate": self.lipschitz_estimate,
                "branch_count": self.branch_count, "reason": self.reason,
                "label": "strong regularity (numerical)"}


def _directions(n, count, seed):
    if n == 1:
        return [np.array([1.0]), np.array([-1.0])]
    if n == 2:
        ang = 2 * np.pi * np.arange(count) / count + 0.1234
        return [np.array([np.cos(a), np.sin(a)]) for a in ang]
    D = np.random.default_rng(seed).normal(size=(count, n))
    return list(D / np.linalg.norm(D, axis=1)[:, None])


def _probe_window(f, v, B, nb, scales, directions, ratio_limit, seed) -> ProbeResult:
    lips = []
    for s in scales:
        Ls = 0.0
        for d in _directions(f.n, directions, seed):
            # base points seed the perturbed search; bifurcations start near them
            pts = enumerate_critical_points(f, v + s * d, starts=PROBE_STARTS, hints=tuple(B))
            if len(pts) != nb or any(not p.isolated for p in pts):
                return ProbeResult(False, np.inf, nb, f"critical count changes at scale {s:g}")
            if nb == 0:
                continue
            W = np.array([p.x for p in pts])
            D = np.linalg.norm(B[:, None, :] - W[None, :, :], axis=2)
            match = D.argmin(axis=1)
            if len(set(match.tolist())) != nb:
                return ProbeResult(False, np.inf, nb, "localization is not single-valued")
            Ls = max(Ls, float(D[np.arange(nb), match].max()) / s)
        lips.append(Ls)
    for a, b in zip(lips[:-1], lips[1:]):
        if b > ratio_limit * a + 1e-9:
            return ProbeResult(False, max(lips), nb, "difference quotients grow across scales")
    return ProbeResult(True, max(lips, default=0.0), nb)


def weak_critical_value_probe(f: FunctionExpr, v, scales=PROBE_SCALES, directions: int = 8,
                              ratio_limit: float = 2.0, seed: int = 0, descend: int = PROBE_DESCEND) -> ProbeResult:
    """Single-valuedness and bounded difference quotients of (∂f)^{-1} on spheres around v.

    Strong regularity is local: when a window of scales sees trouble (typically a
    nearby weak critical value inside the outer sphere) the whole window is shifted
    down one decade, at most `descend` times.  v is flagged only if every window fails.
    """
    v = as_point(v, f.n)
    base = enumerate_critical_points(f, v)
    nb = len(base)
    if any(not p.isolated for p in base):
        return ProbeResult(False, np.inf, nb, "continuum of critical points")
    B = np.array([p.x for p in base]).reshape(nb, f.n)
    scales = np.asarray(scales, dtype=float)
    for k in range(descend + 1):
        res = _probe_window(f, v, B, nb, scales * 10.0 ** -k, directions, ratio_limit, seed)
        if res.strongly_regular:
            return res
    return res


# stable quadratic growth

@dataclass
class GrowthResult:
    ok: bool
    alpha: float | None
    rho: float | None = None
    diagnostic: str = ""

    def to_json(self):
        return {"ok": self.ok, "alpha": self.alpha, "rho": self.rho, "diagnostic": self.diagnostic}


def _dyadic_floor(a: float):
    if not a > 0:
        return None
    k = int(np.floor(np.log2(a * (1 + 1e-8))))
    if k < -10:
        return None
    return float(2.0 ** min(k, 10))


def stable_quadratic_growth_check(f: FunctionExpr, v, x, tilt_radius: float = 0.1, tilts: int = 25,
                                  nbhd_radius: float = 1e-2, points: int = 1000, seed: int = 0,
                                  rhos=GROWTH_RHOS) -> GrowthResult:
    """Largest dyadic α with f_w(z) ≥ f_w(x_w) + α/2|z - x_w|² for sampled tilts w near v.

    The tilt radius is shrunk along a ladder until the check passes (stability is local).
    """
    v = as_point(v, f.n)
    x = as_point(x, f.n)
    rng = np.random.default_rng(seed)
    D = rng.normal(size=(tilts - 1, f.n))
    D /= np.linalg.norm(D, axis=1)[:, None]
    Rs = rng.uniform(size=(tilts - 1, 1)) ** (1.0 / f.n)
    unit = np.vstack([np.zeros((1, f.n)), D * Rs])
    Z0 = _ball_samples(f.n, points, seed)
    # quotients at |z - x_w| << radius are roundoff noise
    Z0 = Z0[np.linalg.norm(Z0, axis=1) > 0.1]
    diag = "no tilt radius passed"
    for rho in [r for r in rhos if r <= tilt_radius]:
        rnb = min(nbhd_radius, 10 * rho)
        alpha = np.inf
        ok = True
        for w in v + rho * unit:
            try:
                near = local_critical_points(f, w, x, radius=max(0.1, 10 * rho))
            except EnumerationError as exc:
                return GrowthResult(False, None, None, str(exc))
            if not near:
                ok, diag = False, f"no critical point near x for tilt {w.tolist()}"
                break
            xw = near[0].x
            Z = xw[None, :] + rnb * Z0
            fz = f.evaluate_many(Z) - Z @ w
            f0 = f.evaluate(xw) - float(w @ xw)
            d2 = np.einsum("ij,ij->i", Z - xw, Z - xw)
            fin = np.isfinite(fz)
            slack = 1e-14 * (np.abs(fz[fin]) + abs(f0))
            ratio = 2.0 * (fz[fin] - f0 + slack) / d2[fin]
            alpha = min(alpha, float(ratio.min()) if ratio.size else np.inf)
            if alpha <= 0:
                ok, diag = False, "no quadratic growth"
                break
        if not ok:
            continue
        a = _dyadic_floor(min(alpha, 2.0 ** 11))
        if a is not None:
            return GrowthResult(True, a, rho)
        diag = "growth constant below 2^-10"
    return GrowthResult(False, None, None, diag)


# four-way second-order equivalence

@dataclass
class EquivalenceTable:
    i: bool | None
    ii: bool | None
    iii: bool | None
    iv: bool | None

    def as_tuple(self):
        return (self.i, self.ii, self.iii, self.iv)

    @property
    def consistent(self) -> bool:
        t = self.as_tuple()
        return all(e is True for e in t) or all(e is False for e in t)

    def code(self) -> str:
        return "".join("?" if e is None else ("T" if e else "F") for e in self.as_tuple())

    def to_json(self):
        return {"i": self.i, "ii": self.ii, "iii": self.iii, "iv": self.iv, "code": self.code()}


def _positive_on(f, x, v, U, manifold=None):
    for u in U:
        if np.linalg.norm(u) == 0:
            continue
        try:
            val = vo.inf_parabolic(f, x, u, v, manifold)
        except DomainError:
            continue
        if not val > POSITIVE_TOL:
            return False
    return True


def second_order_equivalence_check(f: FunctionExpr, v, x, M: ManifoldSpec | None = None,
                                   seed: int = 0, samples: int = 48) -> EquivalenceTable:
    """(i) local minimizer, (ii) stable quadratic growth, (iii) positive parabolic
    subderivative on the critical cone, (iv) the same for f_v + δ_M on T_M."""
    v = as_point(v, f.n)
    x = as_point(x, f.n)
    rng = np.random.default_rng(seed)
    cls = classify_critical_point(f, v, x, seed=seed)
    t1 = True if cls == LOCAL_MIN else (False if cls == NOT_LOCAL_MIN else None)
    t2 = stable_quadratic_growth_check(f, v, x, seed=seed).ok
    try:
        C = vo.critical_cone(f, x, v)
        t3 = True if C.is_trivial() else _positive_on(f, x, v, C.unit_samples(samples, rng))
    except NotExactError:
        t3 = None
    t4 = None
    try:
        if M is None:
            M = pattern_manifold(f, x)
        B = M.tangent_basis(x)
        if B.shape[0] == 0:
            t4 = True
        else:
            U = [b for b in B] + [-b for b in B]
            if B.shape[0] > 1:
                R = rng.normal(size=(samples, B.shape[0])) @ B
                U += list(R / np.linalg.norm(R, axis=1)[:, None])
            t4 = _positive_on(f, x, v, U, M)
    except (ValueError, NotExactError):
        t4 = None
    return EquivalenceTable(t1, t2, t3, t4)


# selection atlas

@dataclass
class SelectionAtlas:
    axes: list
    cardinality: np.ndarray
    regions: list
    branches: dict
    N_max: int
    transition_nodes: list
    transition_values: list
    branch_gap: float
    separated: bool
    coverage: float

    @property
    def nodes(self) -> np.ndarray:
        mesh = np.stack(np.meshgrid(*self.axes, indexing="ij"), axis=-1)
        return mesh.reshape(-1, len(self.axes))

    def to_json(self):
        return {
            "kind": "selection_atlas",
            "axes": [a.tolist() for a in self.axes],
            "cardinality": self.cardinality.reshape(-1).tolist(),
            "regions": self.regions,
            "N_max": self.N_max,
            "transition_nodes": self.transition_nodes,
            "transition_values": self.transition_values,
            "branch_gap": self.branch_gap,
            "separated": self.separated,
            "coverage": self.coverage,
        }

    def branch_rows(self):
        """Flat rows (node index, v..., branch j, x...) for CSV output."""
        nodes = self.nodes
        rows = []
        for k in sorted(self.branches):
            for j, xj in enumerate(self.branches[k]):
                rows.append([k] + nodes[k].tolist() + [j] + list(xj))
        return rows


def _card(f, v):
    try:
        pts = enumerate_critical_points(f, v)
    except (EnumerationError, NotExactError):
        return -1, []
    if any(not p.isolated for p in pts):
        return -1, pts
    return len(pts), pts


def _bisect_transition(f, a, b, ca, steps=48):
    for _ in range(steps):
        m = 0.5 * (a + b)
        if _card(f, np.array([m]))[0] == ca:
            a = m
        else:
            b = m
    return 0.5 * (a + b)


def build_selection_atlas(f: FunctionExpr, axes, branch_gap: float = 1e-6, refine: bool = True,
                          jobs: int = 1) -> SelectionAtlas:
    """Cardinality of (∂f)^{-1}(v) on a grid, its constant-cardinality regions and branch tables."""
    axes = [np.asarray(a, float) for a in axes]
    d = len(axes)
    if d > 2:
        raise ValueError("atlas parameter dimension is limited to 2")
    if d != f.n:
        raise ValueError("grid dimension must match the function dimension")
    shape = tuple(a.size for a in axes)
    nodes = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, d)
    results = _map(lambda_card, [(f, v) for v in nodes], jobs)
    card = np.array([c for c, _ in results]).reshape(shape)
    branches = {}
    separated = True
    for k, (c, pts) in enumerate(results):
        if c <= 0:
            continue
        X = np.array([p.x for p in pts])
        branches[k] = X.tolist()
        if c > 1:
            D = np.linalg.norm(X[:, None, :] - X[None, :, :], axis=2)
            np.fill_diagonal(D, np.inf)
            separated &= bool(D.min() >= branch_gap)
    regions = []
    for c in sorted(set(card.reshape(-1).tolist()) - {-1}):
        lab, num = ndimage.label(card == c)
        for r in range(1, num + 1):
            idx = np.flatnonzero(lab.reshape(-1) == r)
            regions.append({"cardinality": int(c), "nodes": idx.tolist(),
                            "bounds": [nodes[idx].min(axis=0).tolist(), nodes[idx].max(axis=0).tolist()]})
    trans = set(np.flatnonzero(card.reshape(-1) == -1).tolist())
    flat = card.reshape(-1)
    strides = np.cumprod((1,) + shape[::-1])[:-1][::-1]
    pairs = []
    for k in range(flat.size):
        ij = np.unravel_index(k, shape)
        for ax in range(d):
            if ij[ax] + 1 < shape[ax]:
                k2 = k + int(strides[ax])
                if flat[k] != flat[k2]:
                    trans.update((k, k2))
                    pairs.append((k, k2))
    values = []
    if refine and d == 1:
        for k, k2 in pairs:
            a, b = float(nodes[k, 0]), float(nodes[k2, 0])
            t = _bisect_transition(f, a, b, int(flat[k]))
            if not any(abs(t - s) <= 1e-6 for s in values):
                values.append(t)
    covered = sum(len(r["nodes"]) for r in regions) / max(flat.size, 1)
    N_max = int(max(flat.max(initial=0), 0))
    return SelectionAtlas(axes, card, regions, branches, N_max, sorted(trans), sorted(values),
                          branch_gap, bool(separated), float(covered))


def lambda_card(args):
    f, v = args
    return _card(f, v)


def grid_step(nodes) -> float:
    nodes = np.asarray(nodes, dtype=float).reshape(len(nodes), -1)
    steps = [np.diff(np.unique(nodes[:, j])) for j in range(nodes.shape[1])]
    return float(min(d.min() for d in steps if d.size))


def probe_flags(f: FunctionExpr, nodes, scales=None, jobs: int = 1) -> np.ndarray:
    """Probe every grid node at the grid's own resolution: scales (h, h/10, h/100), no descent."""
    if scales is None:
        # padded past the neighbouring nodes by more than the enumerator's acceptance tolerance
        h = grid_step(nodes) + 10 * ACCEPT_TOL
        scales = (h, h / 10, h / 100)
    res = _map(_probe_task, [(f, v, tuple(scales)) for v in nodes], jobs)
    return np.array([not r.strongly_regular for r in res])


def _probe_task(args):
    f, v, scales = args
    return weak_critical_value_probe(f, np.atleast_1d(v), scales=scales, descend=0)


# projections

def projection_identifiability_check(Q: Polyhedron, x, vbar, M: ManifoldSpec, lams=(1e-1, 1e-2),
                                     count: int = 100, seed: int = 0, tol: float = 1e-9) -> bool:
    """P_Q and P_M agree on small balls around x + λ v̄."""
    x = as_point(x, Q.n)
    vbar = as_point(vbar, Q.n)
    rng = np.random.default_rng(seed)
    for lam in lams:
        c = x + lam * vbar
        Z = c + 0.5 * lam * _unit_ball(rng, count, Q.n)
        for z in Z:
            if np.linalg.norm(Q.project(z) - M.project(z)) > tol * (1 + np.linalg.norm(z)):
                return False
    return True


def _unit_ball(rng, k, n):
    D = rng.normal(size=(k, n))
    D /= np.linalg.norm(D, axis=1)[:, None]
    return D * rng.uniform(size=(k, 1)) ** (1.0 / n)


# experiments

@dataclass
class TiltProblem:
    f: FunctionExpr


@dataclass
class CompositeSpec:
    f: FunctionExpr
    h: FunctionExpr
    G: SmoothMap
    starts: tuple = ((-1.5, 0.5), (-0.5, 0.5), (0.5, 0.5), (1.5, 0.5))


ALL_PROPERTIES = ("strict_complementarity", "prox_regular", "identification", "strong_regularity",
                  "stable_growth", "equivalence")


@dataclass
class GenericityReport:
    mode: str
    kind: str
    samples: list
    N_max: int
    failure_set: list
    properties: tuple
    runtime: float = 0.0
    notes: dict = field(default_factory=dict)

    @property
    def failure_fraction(self) -> float:
        return len(self.failure_set) / max(len(self.samples), 1)

    def to_json(self, include_runtime: bool = False):
        doc = {"kind": "genericity_report", "problem_kind": self.kind, "sampling_mode": self.mode,
               "properties": list(self.properties), "samples": self.samples,
               "aggregate": {"N_max": self.N_max, "failure_set": self.failure_set,
                             "failure_fraction": self.failure_fraction, "sample_count": len(self.samples)},
               "notes": self.notes}
        if include_runtime:
            doc["aggregate"]["runtime"] = self.runtime
        return doc


def evaluate_tilt_sample(f: FunctionExpr, sample: PerturbationSample, properties=ALL_PROPERTIES) -> dict:
    v = sample.v
    rec = {"sample": sample.to_json(), "points": [], "errors": [], "failed": False}
    try:
        pts = enumerate_critical_points(f, v, seed=sample.seed % 2**32)
    except (EnumerationError, NotExactError) as exc:
        rec["errors"].append(f"enumeration: {exc}")
        rec["failed"] = True
        rec["critical_count"] = None
        return rec
    rec["critical_count"] = len(pts)
    probe = None
    if "strong_regularity" in properties:
        try:
            probe = weak_critical_value_probe(f, v)
        except (EnumerationError, NotExactError) as exc:
            rec["errors"].append(f"probe: {exc}")
    seed = sample.seed % 2**32
    for p in pts:
        row = {"x": p.x.tolist(), "value": p.value, "residual": p.residual, "isolated": p.isolated}
        failed = not p.isolated
        try:
            if "strict_complementarity" in properties:
                row["strict_complementarity"] = strict_complementarity_check(f, p.x, v)
                failed |= not row["strict_complementarity"]
            if "prox_regular" in properties:
                r = prox_regularity_check(f, p.x, v, seed=seed)
                row["prox_regular"] = r is not None
                row["prox_regularity_r"] = r
                failed |= r is None
            M = None
            if "identification" in properties:
                tr = finite_identification_test(f, v, p.x, seed=seed)
                row["identification"] = tr.verdict
                row["manifold_dim"] = None if tr.manifold is None else tr.manifold.dim
                M = tr.manifold
                failed |= tr.verdict != "Identified"
            if probe is not None:
                row["strongly_regular"] = probe.strongly_regular
                row["lipschitz_estimate"] = probe.lipschitz_estimate
                failed |= not probe.strongly_regular
            if "stable_growth" in properties:
                g = stable_quadratic_growth_check(f, v, p.x, seed=seed)
                row["stable_growth"] = g.ok
                row["alpha"] = g.alpha
            if "equivalence" in properties:
                tab = second_order_equivalence_check(f, v, p.x, M, seed=seed)
                row["equivalence"] = tab.code()
                failed |= not tab.consistent
        except (NotExactError, DomainError, EmptySetError, EnumerationError) as exc:
            rec["errors"].append(f"point {p.x.tolist()}: {exc}")
            failed = True
        rec["points"].append(row)
        rec["failed"] |= bool(failed)
    return rec


def evaluate_composite_sample(spec: CompositeSpec, sample: PerturbationSample) -> dict:
    v, y = sample.v, sample.y if sample.y is not None else np.zeros(spec.G.m)
    rec = {"sample": sample.to_json(), "errors": [], "failed": False}
    try:
        x0, l0 = spec.starts[0]
        pair = solve_composite_critical(spec.f, spec.h, spec.G, v, y, np.full(spec.G.n, x0),
                                        np.full(spec.G.m, l0), extra_starts=spec.starts[1:])
    except (NotExactError, DomainError) as exc:
        rec["errors"].append(str(exc))
        rec["failed"] = True
        return rec
    rec.update(pair.to_json())
    rec["critical_count"] = len(pair.others)
    sc = None
    try:
        z = spec.G.value(pair.x) + y
        J = spec.G.jacobian(pair.x)
        sc = bool(vo.limiting_subdiff(spec.h, z).relative_interior_contains(pair.lam)
                  and vo.limiting_subdiff(spec.f, pair.x).relative_interior_contains(v - J.T @ pair.lam))
    except (NotExactError, DomainError, EmptySetError) as exc:
        rec["errors"].append(f"strict complementarity: {exc}")
    rec["strict_complementarity"] = sc
    qf = pair.qual_flags
    rec["failed"] = bool(pair.status != "CONVERGED" or not sc or qf is None or not qf.bcq
                         or max(pair.residuals) > 1e-8)
    return rec


def _tilt_task(args):
    f, sample, props = args
    return evaluate_tilt_sample(f, sample, props)


def _composite_task(args):
    spec, sample = args
    return evaluate_composite_sample(spec, sample)


def _map(fn, items, jobs):
    if jobs is None or jobs <= 1 or len(items) < 2:
        return [fn(it) for it in items]
    with ProcessPoolExecutor(max_workers=jobs) as ex:
        return list(ex.map(fn, items, chunksize=max(1, len(items) // (4 * jobs))))


def default_jobs() -> int:
    try:
        return max(1, int(os.environ.get("TILTLAB_JOBS", "1")))
    except ValueError:
        return 1


def run_genericity_experiment(problem, sampling: SamplingConfig, properties=ALL_PROPERTIES,
                              jobs: int | None = None) -> GenericityReport:
    """Evaluate every property on every sample; failures are recorded, never raised."""
    jobs = default_jobs() if jobs is None else jobs
    t0 = time.perf_counter()
    samples = sample_perturbations(sampling)
    if isinstance(problem, CompositeSpec):
        recs = _map(_composite_task, [(problem, s) for s in samples], jobs)
        kind = "composite"
        properties = ("strict_complementarity", "qualifications", "uniqueness")
    else:
        f = problem.f if isinstance(problem, TiltProblem) else problem
        recs = _map(_tilt_task, [(f, s, tuple(properties)) for s in samples], jobs)
        kind = "tilt"
    # a continuum of critical points has no finite cardinality
    counts = [r.get("critical_count") or 0 for r in recs
              if all(p.get("isolated", True) for p in r.get("points", []))]
    failures = [r["sample"]["v"] if r["sample"]["y"] is None else r["sample"]["v"] + r["sample"]["y"]
                for r in recs if r["failed"]]
    notes = {"strong_regularity": "numerical: single-valued localization with bounded difference quotients",
             "analyticity": "not certified",
             "surjectivity_onto_manifold": "not tested"}
    return GenericityReport(sampling.mode, kind, recs, int(max(counts, default=0)), failures,
                            tuple(properties), time.perf_counter() - t0, notes)
