"""Conjugates for the convex subclass, primal-dual pairs and their certificates."""
from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np
from scipy.optimize import linprog

from .criticality import solve_composite_critical
from .errors import DomainError, NotExactError
from .function_algebra import (
    FunctionExpr, Indicator, MaxOfSmooth, NormL1, NormL2, NormLinf, Polynomial, Precomposed,
    SquaredComposite, Sum, Tilted, as_point,
)
from .polyhedra import Polyhedron, hrep_to_vrep, vrep_to_hrep
from .polynomials import Poly, SmoothMap
from .terms import ConstraintTerm, L2Term, MaxTerm, MinTerm, lower
from . import variational_oracles as vo

INTERIOR_SLACK = 1e-9


@dataclass
class ConjugatePair:
    primal: FunctionExpr
    conjugate: FunctionExpr


# conjugates

def _assemble(n, pieces, A, b):
    """max of linear pieces plus the indicator of {Au <= b}, simplified."""
    parts = []
    pieces = [p for p in pieces]
    if len(pieces) == 1:
        if not pieces[0].is_zero(1e-15):
            parts.append(Polynomial(pieces[0]))
    else:
        parts.append(MaxOfSmooth(tuple(pieces)))
    if A.shape[0]:
        parts.append(Indicator(Polyhedron(A, b, n)))
    if not parts:
        return Polynomial(Poly(n))
    return parts[0] if len(parts) == 1 else Sum(tuple(parts))


def _polyhedral_conjugate(f: FunctionExpr) -> FunctionExpr:
    L = lower(f)
    n = L.n
    if L.smooth.degree > 1:
        raise NotExactError("not polyhedral")
    a0, c0 = L.smooth.affine_parts()
    maxes, cons = [], []
    for t in L.terms:
        if isinstance(t, ConstraintTerm):
            if not t.is_polyhedral:
                raise NotExactError("curved constraint")
            cons.extend(t.gs)
        elif isinstance(t, MaxTerm) and not isinstance(t, MinTerm):
            if any(p.degree > 1 for p in t.pieces):
                raise NotExactError("nonlinear max piece")
            maxes.append(t)
        else:
            raise NotExactError("term without a polyhedral conjugate rule")
    K = len(maxes)
    # epigraph variables (x, t_1..t_K): piece(x) <= t_k and the linear constraints
    rows, rhs = [], []
    for k, t in enumerate(maxes):
        for p in t.pieces:
            a, c = p.affine_parts()
            e = np.zeros(K)
            e[k] = -1.0
            rows.append(np.concatenate([a, e]))
            rhs.append(-c)
    for g in cons:
        a, c = g.affine_parts()
        rows.append(np.concatenate([a, np.zeros(K)]))
        rhs.append(-c)
    d = n + K
    A = np.array(rows).reshape(-1, d)
    V = hrep_to_vrep(A, np.array(rhs, float))
    if V.is_empty:
        raise DomainError("empty domain")
    cost = np.concatenate([a0, np.ones(K)])
    pieces = []
    for w in V.vertices:
        x = w[:n]
        pieces.append(Poly.linear(x, -(float(cost @ w) + c0)))
    crow, cb = [], []
    for r in V.rays:
        crow.append(r[:n])
        cb.append(float(cost @ r))
    for l in V.lines:
        crow += [l[:n], -l[:n]]
        cb += [float(cost @ l), -float(cost @ l)]
    keep = [i for i, rr in enumerate(crow) if np.linalg.norm(rr) > 1e-12 or cb[i] < 0]
    for i in keep:
        if np.linalg.norm(crow[i]) <= 1e-12 and cb[i] < -1e-12:
            raise DomainError("conjugate is identically +inf")
    keep = [i for i in keep if np.linalg.norm(crow[i]) > 1e-12]
    Ac = np.array([crow[i] for i in keep]).reshape(-1, n)
    bc = np.array([cb[i] for i in keep])
    pieces = _dedupe_polys(pieces)
    return _assemble(n, pieces, Ac, bc)


def _dedupe_polys(ps):
    out = []
    for p in ps:
        if not any((p - q).is_zero(1e-12) for q in out):
            out.append(p)
    return out


def _gauge_dual_pieces(A: np.ndarray) -> np.ndarray:
    """Rows C with max_j C_j·u the dual gauge of x ↦ max_i A_i·x."""
    n = A.shape[1]
    H, b = vrep_to_hrep(A, np.zeros((0, n)), np.zeros((0, n)))
    if np.any(b <= 1e-12):
        raise NotExactError("gauge with an unbounded unit ball")
    return H / b[:, None]


def _linear_rows(pieces):
    return np.array([p.affine_parts()[0] for p in pieces])


def conjugate(f: FunctionExpr) -> FunctionExpr:
    """Exact conjugate from a rule table (norms, quadratics, polyhedral functions, squared gauges)."""
    if not f.is_convex:
        raise NotExactError("conjugate requires a convex function")
    n = f.n
    if isinstance(f, Tilted) and isinstance(f.base, SquaredComposite):
        # (g - <v,.>)*(u) = g*(u + v)
        return Precomposed(conjugate(f.base), SmoothMap.identity(n), f.v)
    if isinstance(f, NormL2):
        if n > 1:
            raise NotExactError("conjugate of the Euclidean norm is a ball indicator, outside the class")
        return Indicator(Polyhedron.box(-np.ones(1), np.ones(1)))
    if isinstance(f, SquaredComposite):
        inner = f.inner
        if isinstance(inner, NormL2):
            return Polynomial(Poly.quadratic(0.5 * np.eye(n)))
        if isinstance(inner, NormL1):
            A = np.array(list(itertools.product((-1.0, 1.0), repeat=n)))
        elif isinstance(inner, NormLinf):
            A = np.vstack([np.eye(n), -np.eye(n)])
        else:
            A = _linear_rows(inner.pieces)
        C = _gauge_dual_pieces(A)
        # (g²)* = (g°/2)² for a gauge g with polar gauge g°
        return SquaredComposite(MaxOfSmooth(tuple(Poly.linear(0.5 * c) for c in C)))
    L = lower(f)
    if not L.terms and L.smooth.degree == 2:
        Q = L.smooth.hess(np.zeros(n))
        g = L.smooth.grad(np.zeros(n))
        c = L.smooth(np.zeros(n))
        lo = np.linalg.eigvalsh(Q).min()
        if lo <= 1e-12:
            raise NotExactError("singular quadratic")
        Qi = np.linalg.inv(Q)
        # ½(u-g)'Q⁻¹(u-g) - c
        return Polynomial(Poly.quadratic(Qi, -Qi @ g, 0.5 * float(g @ Qi @ g) - c))
    if isinstance(f, NormL1):
        return Indicator(Polyhedron.box(-np.ones(n), np.ones(n)))
    return _polyhedral_conjugate(f)


# primal-dual

@dataclass
class DualityCertificate:
    x: np.ndarray
    u: np.ndarray
    primal_value: float
    dual_value: float
    gap: float
    feasibility: dict
    complementarity: bool
    status: str

    def to_json(self):
        return {"x": self.x.tolist(), "u": self.u.tolist(), "primal_value": self.primal_value,
                "dual_value": self.dual_value, "gap": self.gap, "feasibility": self.feasibility,
                "complementarity": self.complementarity, "status": self.status}


def _dom(f: FunctionExpr):
    """(A, b) with dom f = {Ax <= b}."""
    L = lower(f)
    c = L.constraint
    if c is None:
        return np.zeros((0, f.n)), np.zeros(0)
    if not c.is_polyhedral:
        raise NotExactError("curved domain")
    rows = [g.affine_parts() for g in c.gs]
    return np.array([a for a, _ in rows]), -np.array([cc for _, cc in rows])


def _interior_by_lp(blocks, target, dim):
    """target ∈ int{Σ M_i p_i : A_i p_i <= b_i}: a positive step along every ±e_j direction."""
    sizes = [M.shape[1] for M, _, _ in blocks]
    N = sum(sizes)
    A_ub, b_ub = [], []
    off = 0
    for (M, A, b), k in zip(blocks, sizes):
        if A.shape[0]:
            row = np.zeros((A.shape[0], N + 1))
            row[:, off:off + k] = A
            A_ub.append(row)
            b_ub.append(b)
        off += k
    A_ub = np.vstack(A_ub) if A_ub else np.zeros((0, N + 1))
    b_ub = np.concatenate(b_ub) if b_ub else np.zeros(0)
    Meq = np.hstack([M for M, _, _ in blocks])
    for j in range(dim):
        for s in (1.0, -1.0):
            d = np.zeros(dim)
            d[j] = s
            A_eq = np.hstack([Meq, -d[:, None]])
            c = np.zeros(N + 1)
            c[-1] = -1.0
            bounds = [(None, None)] * N + [(None, 1.0)]
            res = linprog(c, A_ub=A_ub if A_ub.shape[0] else None, b_ub=b_ub if A_ub.shape[0] else None,
                          A_eq=A_eq, b_eq=target, bounds=bounds, method="highs")
            if res.status != 0 or -res.fun <= INTERIOR_SLACK:
                return False
    return True


def feasibility_flags(f, h, A, v, y) -> dict:
    A = np.atleast_2d(np.asarray(A, float))
    m, n = A.shape
    v = as_point(v, n)
    y = as_point(y, m)
    Af, bf = _dom(f)
    Ah, bh = _dom(h)
    # Y = dom h - A dom f, written as {z - A x}
    y_int = _interior_by_lp([(np.eye(m), Ah, bh), (-A, Af, bf)], y, m)
    try:
        Afs, bfs = _dom(conjugate(f))
        Ahs, bhs = _dom(conjugate(h))
        v_int = _interior_by_lp([(np.eye(n), Afs, bfs), (A.T, Ahs, bhs)], v, n)
    except NotExactError:
        v_int = None
    return {"y_interior": bool(y_int), "v_interior": v_int}


def primal_objective(f, h, A, v, y, x) -> float:
    A = np.atleast_2d(np.asarray(A, float))
    x = as_point(x, A.shape[1])
    return float(f.evaluate(x) + h.evaluate(A @ x + y) - v @ x)


def dual_objective(fs, hs, A, v, y, u) -> float:
    A = np.atleast_2d(np.asarray(A, float))
    u = as_point(u, A.shape[0])
    return float(-hs.evaluate(u) - fs.evaluate(v - A.T @ u) + y @ u)


DUAL_STARTS = ((0.0, 0.0), (1.0, -1.0), (-1.0, 1.0))


def solve_primal_dual(f, h, A, v, y, starts=DUAL_STARTS) -> DualityCertificate:
    """Primal inf f(x) + h(Ax+y) - <v,x>; dual sup -h*(u) - f*(v - A*u) + <y,u>."""
    A = np.atleast_2d(np.asarray(A, float))
    m, n = A.shape
    v = as_point(v, n)
    y = as_point(y, m)
    if not (f.is_convex and h.is_convex):
        raise NotExactError("duality block needs convex f and h")
    fs, hs = conjugate(f), conjugate(h)
    feas = feasibility_flags(f, h, A, v, y)
    Af, bf = _dom(f)
    Ah, bh = _dom(h)
    rows = np.vstack([np.hstack([Af, np.zeros((Af.shape[0], 0))]), Ah @ A]) if Ah.size else Af
    rhs = np.concatenate([bf, bh - Ah @ y]) if Ah.size else bf
    if rows.shape[0]:
        res = linprog(np.zeros(n), A_ub=rows, b_ub=rhs, bounds=[(None, None)] * n, method="highs")
        if res.status != 0:
            raise DomainError("primal problem is infeasible")
    G = SmoothMap.affine(A)
    pair = solve_composite_critical(f, h, G, v, y, np.full(n, starts[0][0]), np.full(m, starts[0][1]),
                                    extra_starts=starts[1:])
    if pair.status == "DIVERGED":
        raise DomainError("no primal-dual solution found (unbounded or infeasible dual)")
    x, u = pair.x, pair.lam
    pv = primal_objective(f, h, A, v, y, x)
    dv = dual_objective(fs, hs, A, v, y, u)
    try:
        comp = bool(vo.limiting_subdiff(h, A @ x + y).contains(u, 1e-7)
                    and vo.limiting_subdiff(f, x).contains(v - A.T @ u, 1e-7))
    except DomainError:
        comp = False
    gap = pv - dv if np.isfinite(pv) and np.isfinite(dv) else np.inf
    return DualityCertificate(x, u, pv, dv, float(gap), feas, comp, pair.status)


# checks

def _sample_points(f, rng, k, box):
    n = f.n
    X = rng.uniform(box[0], box[1], size=(k, n))
    half = k // 2
    X[:half] = np.round(X[:half] * 2.0) / 2.0  # land on kinks and faces
    return X[np.isfinite(f.evaluate_many(X))]


def _sample_subgradients(S, rng):
    P = S.pieces[0]
    return P.sample(1, rng)[0]


def inverse_subdiff_check(f: FunctionExpr, samples: int = 100, seed: int = 0, box=(-2.0, 2.0),
                          tol: float = 1e-7) -> bool:
    """u ∈ ∂f(x) implies x ∈ ∂f*(u) on sampled pairs."""
    fs = conjugate(f)
    rng = np.random.default_rng(seed)
    X = _sample_points(f, rng, 4 * samples, box)[:samples]
    for x in X:
        S = vo.limiting_subdiff(f, x)
        u = _sample_subgradients(S, rng)
        if not np.isfinite(fs.evaluate(u)):
            return False
        if not vo.limiting_subdiff(fs, u).contains(x, tol):
            return False
    return True


def fenchel_young_check(f: FunctionExpr, samples: int = 100, seed: int = 0, box=(-2.0, 2.0)) -> bool:
    """f(x) + f*(u) ≥ <u,x> on random pairs, with equality for u ∈ ∂f(x)."""
    fs = conjugate(f)
    rng = np.random.default_rng(seed)
    X = _sample_points(f, rng, 2 * samples, box)[:samples]
    for x in X:
        u = rng.uniform(box[0], box[1], size=f.n)
        if f.evaluate(x) + fs.evaluate(u) < u @ x - 1e-9:
            return False
        g = _sample_subgradients(vo.limiting_subdiff(f, x), rng)
        if abs(f.evaluate(x) + fs.evaluate(g) - g @ x) > 1e-8 * (1 + abs(g @ x)):
            return False
    return True


def biconjugation_error(f: FunctionExpr, grid) -> float:
    """max |f** - f| over the grid (inf where only one side is finite)."""
    ff = conjugate(conjugate(f))
    X = np.asarray(grid, float).reshape(-1, f.n)
    a, b = f.evaluate_many(X), ff.evaluate_many(X)
    fin = np.isfinite(a) & np.isfinite(b)
    if np.any(np.isfinite(a) != np.isfinite(b)):
        return np.inf
    return float(np.max(np.abs(a[fin] - b[fin]), initial=0.0))


@dataclass
class DependenceResult:
    passes: bool
    quotients: list
    reason: str = ""

    def to_json(self):
        return {"passes": self.passes, "quotients": self.quotients, "reason": self.reason}


def smooth_dependence_probe(f, h, A, v, y, radius: float = 1e-2, ratio_limit: float = 2.0,
                            kink_tol: float = 1e-3) -> DependenceResult:
    """Unique solutions on shrinking spheres in (v, y) with bounded and two-sided-consistent quotients."""
    A = np.atleast_2d(np.asarray(A, float))
    m, n = A.shape
    v = as_point(v, n)
    y = as_point(y, m)
    base = solve_primal_dual(f, h, A, v, y)
    if base.status != "CONVERGED":
        raise DomainError(f"base point not uniquely solvable ({base.status})")
    z0 = np.concatenate([base.x, base.u])
    scales = [radius, radius / 10, radius / 100]
    qs = []
    one_sided = {}
    for s in scales:
        q = 0.0
        for j in range(n + m):
            for sg in (1.0, -1.0):
                dv = np.zeros(n)
                dy = np.zeros(m)
                if j < n:
                    dv[j] = sg * s
                else:
                    dy[j - n] = sg * s
                c = solve_primal_dual(f, h, A, v + dv, y + dy)
                if c.status != "CONVERGED":
                    return DependenceResult(False, qs, f"non-unique or unresolved solution at scale {s:g}")
                dz = (np.concatenate([c.x, c.u]) - z0) / s
                q = max(q, float(np.linalg.norm(dz)))
                if s == scales[-1]:
                    one_sided[(j, sg)] = sg * dz
        qs.append(q)
    for a, b in zip(qs[:-1], qs[1:]):
        if b > ratio_limit * a + 1e-9:
            return DependenceResult(False, qs, "difference quotients grow across scales")
    for j in range(n + m):
        dp, dm = one_sided[(j, 1.0)], one_sided[(j, -1.0)]
        if np.linalg.norm(dp - dm) > kink_tol * (1 + np.linalg.norm(dp)):
            return DependenceResult(False, qs, "one-sided derivatives disagree")
    return DependenceResult(True, qs)
