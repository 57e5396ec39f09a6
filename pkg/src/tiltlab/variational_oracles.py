"""Prox, subdifferentials, subderivatives, critical cones, tangent sets and
parabolic subderivatives for the structured class, plus independent numerical
estimators used only for cross-validation.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DomainError, NotExactError, UnboundedError
from .function_algebra import (
    FunctionExpr, Indicator, ManifoldSpec, NormL1, NormL2, NormLinf, Polynomial, Precomposed,
    SquaredComposite, Sum, Tilted, as_point,
)
from .polyhedra import Ball, ConeRep, Polyhedron, minkowski
from .polynomials import Poly
from .terms import ConstraintSet, ConstraintTerm, MinTerm, SOModel, lower

DEFAULT_TOL = 1e-9
F_ATTENTIVE_DELTA = 1e-6


# subgradient sets

@dataclass(frozen=True)
class SubgradientSet:
    pieces: tuple
    convex_hint: bool
    n: int

    @property
    def is_empty(self) -> bool:
        return len(self.pieces) == 0

    def contains(self, v, tol: float = DEFAULT_TOL) -> bool:
        return any(p.contains(v, tol) for p in self.pieces)

    def distance(self, v) -> float:
        v = as_point(v, self.n)
        if self.is_empty:
            return np.inf
        return float(min(p.distance(v) for p in self.pieces))

    def relative_interior_contains(self, v, tol: float = DEFAULT_TOL) -> bool:
        if self.is_empty:
            return False
        if len(self.pieces) != 1:
            return False
        return self.pieces[0].relative_interior_contains(as_point(v, self.n), tol)

    def support(self, u) -> float:
        if self.is_empty:
            return -np.inf
        return max(p.support(u) for p in self.pieces)

    def para_basis(self) -> np.ndarray:
        """Subspace parallel to the affine hull (single convex piece only)."""
        if len(self.pieces) != 1:
            raise NotExactError("parallel subspace of a non-convex subgradient set")
        return self.pieces[0].para_basis()

    def is_subset_of(self, other: "SubgradientSet", tol: float = 1e-7) -> bool:
        for p in self.pieces:
            if isinstance(p, Ball):
                pts = [p.center] if p.radius == 0 else [p.center + p.radius * s * e
                                                       for e in np.eye(self.n) for s in (1, -1)]
                if not all(other.contains(q, tol) for q in pts):
                    return False
                continue
            if not any(isinstance(o, Polyhedron) and o.contains_set(p, tol) for o in other.pieces):
                if not all(other.contains(q, tol) for q in p.vrep.vertices) or p.vrep.rays.size or p.vrep.lines.size:
                    return False
        return True

    def to_json(self) -> dict:
        out = []
        for p in self.pieces:
            out.append(p.to_json() if isinstance(p, Ball) else {"A": p.A.tolist(), "b": p.b.tolist()})
        return {"kind": "subgradient_set", "n": self.n, "convex": self.convex_hint, "pieces": out}


def _is_singleton(p) -> bool:
    if isinstance(p, Ball):
        return p.radius == 0
    v = p.vrep
    return v.vertices.shape[0] == 1 and not v.rays.size and not v.lines.size


def _singleton_point(p) -> np.ndarray:
    return p.center if isinstance(p, Ball) else p.vrep.vertices[0]


def _at(f: FunctionExpr, x):
    L = lower(f)
    return L, L.check_domain(x)


def _assemble(L, x, proximal: bool) -> SubgradientSet:
    base = L.smooth.grad(x)
    sets = []
    nonreg = []
    for i, t in enumerate(L.terms):
        if isinstance(t, MinTerm) and not t.is_regular_at(x):
            nonreg.append(i)
            sets.append(t.proximal(x) if proximal else t.limiting(x))
        else:
            sets.append(t.limiting(x))
    if not nonreg:
        # singletons only shift the sum; Minkowski sums are needed for the rest
        shift = base.copy()
        acc = None
        for s in sets:
            if _is_singleton(s[0]):
                shift = shift + _singleton_point(s[0])
            else:
                acc = s[0] if acc is None else minkowski(acc, s[0])
        acc = Polyhedron.from_generators(shift[None, :], n=L.n) if acc is None else acc.translate(shift)
        return SubgradientSet((acc,), True, L.n)
    if len(nonreg) > 1:
        raise NotExactError("several non-regular terms are active at the point")
    shift = base.copy()
    for i, s in enumerate(sets):
        if i in nonreg:
            continue
        if not _is_singleton(s[0]):
            raise NotExactError("non-regular term next to a non-smooth regular term")
        shift = shift + _singleton_point(s[0])
    pieces = tuple(p.translate(shift) for p in sets[nonreg[0]])
    return SubgradientSet(pieces, len(pieces) <= 1, L.n)


def limiting_subdiff(f: FunctionExpr, x) -> SubgradientSet:
    L, x = _at(f, x)
    return _assemble(L, x, proximal=False)


def proximal_subdiff(f: FunctionExpr, x) -> SubgradientSet:
    L, x = _at(f, x)
    return _assemble(L, x, proximal=True)


def horizon_subdiff(f: FunctionExpr, x) -> ConeRep:
    L, x = _at(f, x)
    c = L.constraint
    return c.horizon(x) if c is not None else ConeRep.trivial(L.n)


def subderivative(f: FunctionExpr, x, u) -> float:
    L, x = _at(f, x)
    u = as_point(u, L.n)
    val = float(L.smooth.grad(x) @ u)
    for t in L.terms:
        val += t.d1(x, u)
    return val


def second_order_model(f: FunctionExpr, x, u, v=None) -> SOModel:
    """Parabolic subderivative of f - <v,.> at (x, u) as a function of w."""
    L, x = _at(f, x)
    u = as_point(u, L.n)
    if not np.isfinite(subderivative(f, x, u)):
        raise DomainError("direction outside the domain of the subderivative")
    m = SOModel(L.n, q0=float(u @ L.smooth.hess(x) @ u), g0=L.smooth.grad(x).copy())
    if v is not None:
        m.g0 = m.g0 - as_point(v, L.n)
    for t in L.terms:
        m.add(t.so_model(x, u))
    return m


def parabolic_subderivative(f: FunctionExpr, x, u, w) -> float:
    m = second_order_model(f, x, u)
    return m.value(as_point(w, m.n))


def inf_parabolic(f: FunctionExpr, x, u, v, manifold: ManifoldSpec | None = None) -> float:
    """inf over w of d²(f_v [+ δ_M])(x)(u|w)."""
    m = second_order_model(f, x, u, v)
    if manifold is not None:
        x = as_point(x, m.n)
        u = as_point(u, m.n)
        for h in manifold.equations():
            m.A_eq.append(h.grad(x))
            m.b_eq.append(-float(u @ h.hess(x) @ u))
    return m.inf_over_w()


def critical_cone(f: FunctionExpr, x, v, tol: float = DEFAULT_TOL) -> ConeRep:
    L, x = _at(f, x)
    v = as_point(v, L.n)
    S = limiting_subdiff(f, x)
    if S.contains(v, tol):
        if S.convex_hint:
            P = S.pieces[0]
            if isinstance(P, Ball):
                d = v - P.center
                if np.linalg.norm(d) < P.radius - tol:
                    return ConeRep.trivial(L.n)
                return ConeRep(L.n, rays=(d / np.linalg.norm(d))[None, :])
            vr = P.vrep
            rows = [s - v for s in vr.vertices] + list(vr.rays)
            rows += list(vr.lines) + [-l for l in vr.lines]
            H = np.array([r for r in rows if np.linalg.norm(r) > 1e-8]).reshape(-1, L.n)
            return ConeRep(L.n, H=H) if H.size else ConeRep.whole(L.n)
        # non-regular: v is tied to one gradient group of the min term
        t = next(t for t in L.terms if isinstance(t, MinTerm) and not t.is_regular_at(x))
        j = next(i for i, p in enumerate(S.pieces) if p.contains(v, tol))
        gj = t.essential_groups(x)[j]
        G = t.grads(x, t.active(x))
        H = np.array([gj - g for g in G if np.linalg.norm(gj - g) > 1e-9]).reshape(-1, L.n)
        return ConeRep(L.n, H=H) if H.size else ConeRep.whole(L.n)
    if L.n == 1:
        rays = [np.array([s]) for s in (1.0, -1.0)
                if abs(subderivative(f, x, [s]) - s * v[0]) <= tol * (1 + abs(v[0]))]
        if len(rays) == 2:
            return ConeRep.whole(1)
        return ConeRep(1, rays=np.array(rays).reshape(-1, 1)) if rays else ConeRep.trivial(1)
    raise NotExactError("critical cone for v outside the subdifferential in dimension > 1")


# tangent sets

@dataclass
class SecondOrderTangentRep:
    Q: ConstraintSet
    x: np.ndarray
    u: np.ndarray
    polyhedron: Polyhedron

    def contains(self, w, tol: float = DEFAULT_TOL) -> bool:
        return self.polyhedron.contains(w, tol)

    def limit_member(self, w, ts=(1e-2, 1e-3, 1e-4), slack: float = 10.0) -> bool:
        """Sequence test: x + t u + ½t² w' ∈ Q with |w' - w| ≤ slack·t for each t."""
        w = np.asarray(w, float)
        n = w.size
        dirs = [np.zeros(n)] + [s * e for e in np.eye(n) for s in (1.0, -1.0)]
        for t in ts:
            ok = False
            for d in dirs:
                for k in (0.0, 1.0, slack):
                    p = self.x + t * self.u + 0.5 * t * t * (w + k * t * d)
                    if self.Q.contains(p, 1e-13):
                        ok = True
                        break
                if ok:
                    break
            if not ok:
                return False
        return True


def _as_constraint_set(Q) -> ConstraintSet:
    if isinstance(Q, ConstraintSet):
        return Q
    if isinstance(Q, Polyhedron):
        return ConstraintSet.from_polyhedron(Q)
    if isinstance(Q, ManifoldSpec):
        return ConstraintSet.from_manifold(Q)
    if isinstance(Q, FunctionExpr):
        L = lower(Q)
        if not L.smooth.is_zero() or any(not isinstance(t, ConstraintTerm) for t in L.terms):
            raise NotExactError("expression is not an indicator")
        return ConstraintSet(L.n, list(L.constraint.gs) if L.constraint else [])
    raise TypeError(f"unsupported set type {type(Q).__name__}")


def tangent_sets(Q, x, u=None):
    """(T_Q(x), T²_Q(x|u)) for a polyhedron, manifold or polynomial constraint set."""
    Q = _as_constraint_set(Q)
    x = as_point(x, Q.n)
    if not Q.contains(x, 1e-9):
        raise DomainError("base point outside the set")
    act = Q.active(x)
    rows = [g.grad(x) for g in act] + [h.grad(x) for h in Q.eqs] + [-h.grad(x) for h in Q.eqs]
    H = np.array(rows).reshape(-1, Q.n)
    H = H[np.linalg.norm(H, axis=1) > 1e-14] if H.size else H
    if act and any(g.degree > 1 for g in act):
        ct = ConstraintTerm(act)
        if not ct.check_mfcq(x):
            raise NotExactError("curved set without a Mangasarian-Fromovitz direction")
    T = ConeRep(Q.n, H=H) if H.size else ConeRep.whole(Q.n)
    if u is None:
        return T, None
    u = as_point(u, Q.n)
    if H.size and np.any(H @ u > 1e-9 * (1 + np.linalg.norm(u))):
        raise DomainError("direction outside the tangent cone")
    A2, b2 = [], []
    for g in act:
        gr = g.grad(x)
        if abs(gr @ u) <= 1e-9 * (1 + np.linalg.norm(u)):
            A2.append(gr)
            b2.append(-float(u @ g.hess(x) @ u))
    for h in Q.eqs:
        gr = h.grad(x)
        c = -float(u @ h.hess(x) @ u)
        A2 += [gr, -gr]
        b2 += [c, -c]
    P = Polyhedron(np.array(A2).reshape(-1, Q.n), np.array(b2), Q.n)
    return T, SecondOrderTangentRep(Q, x, u, P)


# prox

def _project_l1_ball(z: np.ndarray, radius: float = 1.0) -> np.ndarray:
    if np.abs(z).sum() <= radius:
        return z.copy()
    a = np.sort(np.abs(z))[::-1]
    cs = np.cumsum(a)
    k = np.arange(1, a.size + 1)
    rho = np.nonzero(a - (cs - radius) / k > 0)[0][-1]
    theta = (cs[rho] - radius) / (rho + 1)
    return np.sign(z) * np.maximum(np.abs(z) - theta, 0.0)


def _prox_sq_l1(z: np.ndarray, r: float) -> np.ndarray:
    a = np.sort(np.abs(z))[::-1]
    if a[0] == 0:
        return np.zeros_like(z)
    cs = np.cumsum(a)
    for k in range(1, a.size + 1):
        tau = 2.0 * cs[k - 1] / (r + 2 * k)
        nxt = a[k] if k < a.size else 0.0
        if a[k - 1] > tau >= nxt:
            return np.sign(z) * np.maximum(np.abs(z) - tau, 0.0)
    tau = 2.0 * cs[-1] / (r + 2 * a.size)
    return np.sign(z) * np.maximum(np.abs(z) - tau, 0.0)


def _prox_closed(f: FunctionExpr, z: np.ndarray, r: float):
    if isinstance(f, NormL1):
        return [np.sign(z) * np.maximum(np.abs(z) - 1.0 / r, 0.0)]
    if isinstance(f, NormL2):
        nz = np.linalg.norm(z)
        return [z * max(0.0, 1.0 - 1.0 / (r * nz))] if nz > 0 else [z.copy()]
    if isinstance(f, NormLinf):
        return [z - _project_l1_ball(r * z) / r]
    if isinstance(f, Indicator):
        return [f.P.project(z)]
    if isinstance(f, Polynomial) and f.p.degree <= 2:
        key = ("quad", r)
        cache = f.__dict__.setdefault("_prox_cache", {})
        if key not in cache:
            Q = f.p.hess(np.zeros(f.n))
            g = f.p.grad(np.zeros(f.n))
            M = Q + r * np.eye(f.n)
            lo = np.linalg.eigvalsh(M).min()
            cache[key] = (np.linalg.inv(M) if lo > 1e-12 else None, g, lo)
        Minv, g, lo = cache[key]
        if lo < -1e-12:
            raise UnboundedError("prox subproblem is unbounded below")
        if Minv is None:
            return None
        return [Minv @ (r * z - g)]
    if isinstance(f, Tilted):
        return prox(f.base, z + f.v / r, r)
    if isinstance(f, SquaredComposite):
        if isinstance(f.inner, NormL1):
            return [_prox_sq_l1(z, r)]
        if isinstance(f.inner, NormL2):
            return [r * z / (2.0 + r)]
    return None


def prox(f: FunctionExpr, z, r: float) -> list:
    """All global minimisers of f(x) + (r/2)|x - z|², sorted lexicographically."""
    z = as_point(z, f.n)
    if not r > 0:
        raise ValueError("prox parameter must be positive")
    out = _prox_closed(f, z, float(r))
    if out is None:
        out = _prox_enumerate(f, z, float(r))
    return sorted(out, key=lambda p: tuple(p))


def _prox_enumerate(f: FunctionExpr, z: np.ndarray, r: float) -> list:
    from .criticality import enumerate_critical_points

    n = f.n
    quad = Polynomial(Poly.quadratic(r * np.eye(n), -r * z, 0.5 * r * float(z @ z)))
    g = Sum((f, quad))
    pts = enumerate_critical_points(g, np.zeros(n), box=(z - 10.0 - 10.0 / r, z + 10.0 + 10.0 / r))
    vals = [(g.evaluate(p.x), p.x) for p in pts]
    vals = [(fv, x) for fv, x in vals if np.isfinite(fv)]
    if not vals:
        raise UnboundedError("prox subproblem has no critical point")
    best = min(fv for fv, _ in vals)
    rng = np.random.default_rng(0)
    far = rng.normal(size=(16, n))
    far /= np.linalg.norm(far, axis=1)[:, None]
    for R in (1e3, 1e6):
        fv = g.evaluate_many(z + R * far)
        if np.any(fv < best - 1e-9 * (1 + abs(best))):
            raise UnboundedError("prox subproblem is unbounded below")
    return [x for fv, x in vals if fv <= best + 1e-10 * (1 + abs(best))]


# numerical estimators (cross-checks only)

T_LADDER = 1e-2 * 2.0 ** -np.arange(10)


def _fit_rate(ts: np.ndarray, Q: np.ndarray):
    """Extrapolate Q(t) = a + b t + ... to t = 0; returns (a, b, consistency gap)."""
    deg = 3
    full = np.polyfit(ts, Q, deg)
    half = np.polyfit(ts[2:], Q[2:], deg)
    a, b = full[-1], full[-2]
    gap = max(abs(a - half[-1]), abs(b - half[-2]) * 1e-2)
    return float(a), float(b), float(gap)


def _arc_quotients(f, x, u, w, ts, du=None, dw=None, K=0.0):
    fx = f.evaluate(x)
    du = np.zeros_like(x) if du is None else du
    dw = np.zeros_like(x) if dw is None else dw
    U = u[None, :] + K * ts[:, None] * du[None, :]
    W = w[None, :] + K * ts[:, None] * dw[None, :]
    X = x[None, :] + ts[:, None] * U + 0.5 * (ts ** 2)[:, None] * W
    vals = f.evaluate_many(X)
    return (vals - fx) / ts


def _numeric_rates(f: FunctionExpr, x, u, w, perturb: str):
    x = as_point(x, f.n)
    u = as_point(u, f.n)
    w = as_point(w, f.n)
    if not np.isfinite(f.evaluate(x)):
        raise DomainError("point outside the domain")
    dirs = [s * e for e in np.eye(f.n) for s in (1.0, -1.0)]
    for scale in (1.0, 1e-1, 1e-2):
        ts = T_LADDER * scale
        best = None
        Q = _arc_quotients(f, x, u, w, ts)
        if np.all(np.isfinite(Q)):
            best = _fit_rate(ts, Q)
        else:
            for K in (1.0, 10.0):
                for d in dirs:
                    kw = {"du": d} if perturb == "u" else {"dw": d}
                    Q = _arc_quotients(f, x, u, w, ts, K=K, **kw)
                    if np.all(np.isfinite(Q)):
                        cand = _fit_rate(ts, Q)
                        if best is None or cand[0] + 1e-3 * cand[1] < best[0] + 1e-3 * best[1]:
                            best = cand
                if best is not None:
                    break
        if best is None:
            return np.inf, np.inf
        a, b, gap = best
        if gap <= 1e-7 * (1 + abs(a) + abs(b)):
            return a, 2.0 * b
    return a, 2.0 * b


def numeric_subderivative(f: FunctionExpr, x, u) -> float:
    d, _ = _numeric_rates(f, x, u, np.zeros(f.n), "u")
    return d


def numeric_parabolic_subderivative(f: FunctionExpr, x, u, w) -> float:
    d, d2 = _numeric_rates(f, x, u, w, "w")
    if not np.isfinite(d):
        return np.inf
    return d2


def agree(a: float, b: float, rel: float = 1e-4) -> bool:
    if not (np.isfinite(a) and np.isfinite(b)):
        return a == b
    return abs(a - b) <= rel * max(1.0, abs(a))


# f-attentive sampling

def f_attentive_pairs(f: FunctionExpr, x, radius: float, count: int, rng: np.random.Generator,
                      delta: float = F_ATTENTIVE_DELTA):
    """(x_i, g_i) with |x_i - x| ≤ radius, |f(x_i) - f(x)| ≤ delta, g_i a proximal subgradient at x_i."""
    x = as_point(x, f.n)
    fx = f.evaluate(x)
    out = []
    n = f.n
    D = rng.normal(size=(count, n))
    D /= np.linalg.norm(D, axis=1)[:, None]
    R = radius * rng.uniform(size=(count, 1)) ** (1.0 / n)
    X = np.vstack([x[None, :] + D * R])
    vals = f.evaluate_many(X)
    keep = np.isfinite(vals) & (np.abs(vals - fx) <= delta)
    for xi in X[keep]:
        try:
            S = proximal_subdiff(f, xi)
        except (NotExactError, DomainError):
            continue
        if S.is_empty:
            continue
        P = S.pieces[0]
        if isinstance(P, Ball):
            out.append((xi, P.center.copy()))
        else:
            out.append((xi, P.vrep.vertices[0].copy()))
    return out
