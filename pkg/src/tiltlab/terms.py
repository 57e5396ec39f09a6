"""Lowering of FunctionExpr into a smooth polynomial plus structured terms.

Each term knows its own local first- and second-order behaviour at a point:
active pieces, subgradient pieces, subderivative, and the parabolic model in
the second-order correction w.  The variational oracles combine these through
sum rules that are exact for the class.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linprog

from .errors import DomainError, NotExactError
from .function_algebra import (
    FunctionExpr, Indicator, MaxOfSmooth, MinOfSmooth, NormL1, NormL2, NormLinf, Polynomial,
    Precomposed, SquaredComposite, Sum, Tilted, as_point,
)
from .polyhedra import Ball, ConeRep, Polyhedron
from .polynomials import Poly, SmoothMap

ACTIVE_TOL = 1e-9
FEAS_TOL = 1e-12


def _active_max(vals: np.ndarray, tol: float) -> np.ndarray:
    m = vals.max()
    return np.flatnonzero(vals >= m - tol * (1.0 + abs(m)))


def _active_min(vals: np.ndarray, tol: float) -> np.ndarray:
    m = vals.min()
    return np.flatnonzero(vals <= m + tol * (1.0 + abs(m)))


def _dedupe_polys(polys):
    seen, out = set(), []
    for p in polys:
        if p not in seen:
            seen.add(p)
            out.append(p)
    return tuple(out)


def _group_gradients(G: np.ndarray, tol: float = 1e-9):
    """Indices grouped by (numerically) equal rows."""
    groups: list[list[int]] = []
    for i, g in enumerate(G):
        for grp in groups:
            if np.linalg.norm(G[grp[0]] - g) <= tol * (1.0 + np.linalg.norm(g)):
                grp.append(i)
                break
        else:
            groups.append([i])
    return groups


# smooth selections used by stratum solvers

class PolySel:
    def __init__(self, p: Poly):
        self.p = p

    def value(self, x):
        return self.p(x)

    def grad(self, x):
        return self.p.grad(x)

    def hess(self, x):
        return self.p.hess(x)


class L2Sel:
    """|Ax + c| away from its kink."""

    def __init__(self, A, c):
        self.A, self.c = A, c

    def value(self, x):
        return float(np.linalg.norm(self.A @ x + self.c))

    def grad(self, x):
        z = self.A @ x + self.c
        nz = np.linalg.norm(z)
        return self.A.T @ z / nz if nz > 0 else np.zeros_like(x)

    def hess(self, x):
        z = self.A @ x + self.c
        nz = np.linalg.norm(z)
        if nz == 0:
            return np.zeros((x.size, x.size))
        m = z.size
        return self.A.T @ (np.eye(m) / nz - np.outer(z, z) / nz ** 3) @ self.A


class SumSel:
    def __init__(self, parts):
        self.parts = list(parts)

    def value(self, x):
        return sum(p.value(x) for p in self.parts)

    def grad(self, x):
        return sum((p.grad(x) for p in self.parts), np.zeros(x.size))

    def hess(self, x):
        return sum((p.hess(x) for p in self.parts), np.zeros((x.size, x.size)))


@dataclass
class Stratum:
    """Smooth selection together with the equations that cut out its piece of space."""

    sel: object
    eqs: list
    label: tuple


# second-order models in the correction vector w

@dataclass
class SOModel:
    n: int
    q0: float = 0.0
    g0: np.ndarray = None
    max_groups: list = field(default_factory=list)
    min_groups: list = field(default_factory=list)
    A_ub: list = field(default_factory=list)
    b_ub: list = field(default_factory=list)
    A_eq: list = field(default_factory=list)
    b_eq: list = field(default_factory=list)
    infinite: bool = False

    def __post_init__(self):
        if self.g0 is None:
            self.g0 = np.zeros(self.n)

    def add(self, other: "SOModel") -> None:
        self.q0 += other.q0
        self.g0 = self.g0 + other.g0
        self.max_groups += other.max_groups
        self.min_groups += other.min_groups
        self.A_ub += other.A_ub
        self.b_ub += other.b_ub
        self.A_eq += other.A_eq
        self.b_eq += other.b_eq
        self.infinite = self.infinite or other.infinite

    def value(self, w) -> float:
        if self.infinite:
            return np.inf
        w = np.asarray(w, float)
        for a, b in zip(self.A_ub, self.b_ub):
            if a @ w > b + 1e-9 * (1 + abs(b)):
                return np.inf
        for a, b in zip(self.A_eq, self.b_eq):
            if abs(a @ w - b) > 1e-9 * (1 + abs(b)):
                return np.inf
        val = self.q0 + self.g0 @ w
        for grp in self.max_groups:
            val += max(q + g @ w for q, g in grp)
        for grp in self.min_groups:
            val += min(q + g @ w for q, g in grp)
        return float(val)

    def inf_over_w(self) -> float:
        """inf_w of the model; exact via LP, with unboundedness read off two nested boxes."""
        if self.infinite:
            return np.inf
        choices = itertools.product(*[range(len(g)) for g in self.min_groups]) if self.min_groups else [()]
        best = np.inf
        for ch in choices:
            q = self.q0 + sum(self.min_groups[j][k][0] for j, k in enumerate(ch))
            g = self.g0 + sum((self.min_groups[j][k][1] for j, k in enumerate(ch)), np.zeros(self.n))
            best = min(best, self._inf_max(q, g))
            if best == -np.inf:
                break
        return best

    def _inf_max(self, q: float, g: np.ndarray) -> float:
        groups = [grp for grp in self.max_groups]
        if not groups and not self.A_ub and not self.A_eq:
            return q if np.linalg.norm(g) <= 1e-7 else -np.inf
        if not self.A_ub and not self.A_eq and all(len(grp) == 1 for grp in groups):
            gt = g + sum((grp[0][1] for grp in groups), np.zeros(self.n))
            qt = q + sum(grp[0][0] for grp in groups)
            return qt if np.linalg.norm(gt) <= 1e-7 else -np.inf
        vals = [self._lp(q, g, groups, R) for R in (1e3, 1e5)]
        if vals[0] is None:
            return np.inf
        if vals[1] < vals[0] - 1e-3:
            return -np.inf
        return vals[0]

    def _lp(self, q, g, groups, R):
        n, k = self.n, len(groups)
        c = np.concatenate([g, np.ones(k)])
        rows, rhs = [], []
        for j, grp in enumerate(groups):
            for qi, gi in grp:
                row = np.zeros(n + k)
                row[:n] = gi
                row[n + j] = -1.0
                rows.append(row)
                rhs.append(-qi)
        for a, b in zip(self.A_ub, self.b_ub):
            rows.append(np.concatenate([a, np.zeros(k)]))
            rhs.append(b)
        A_eq = np.array([np.concatenate([a, np.zeros(k)]) for a in self.A_eq]) if self.A_eq else None
        b_eq = np.array(self.b_eq) if self.A_eq else None
        bounds = [(-R, R)] * n + [(None, None)] * k
        res = linprog(c, A_ub=np.array(rows) if rows else None, b_ub=np.array(rhs) if rows else None,
                      A_eq=A_eq, b_eq=b_eq, bounds=bounds, method="highs")
        if res.status == 2:
            return None
        if res.status != 0:
            raise NotExactError(f"second-order LP failed: {res.message}")
        return float(res.fun + q)


# terms

class Term:
    n: int
    regular = True
    lipschitz = True

    def value_many(self, X) -> np.ndarray:
        raise NotImplementedError

    def compose(self, maps, G: SmoothMap, y) -> "Term":
        raise NotImplementedError


class MaxTerm(Term):
    def __init__(self, pieces):
        self.pieces = _dedupe_polys(pieces)
        self.n = self.pieces[0].n

    def value_many(self, X):
        return np.max(np.stack([p.eval_many(X) for p in self.pieces]), axis=0)

    def values(self, x):
        return np.array([p(x) for p in self.pieces])

    def active(self, x, tol=ACTIVE_TOL):
        return _active_max(self.values(x), tol)

    def grads(self, x, idx):
        return np.array([self.pieces[i].grad(x) for i in idx]).reshape(-1, self.n)

    def limiting(self, x):
        G = self.grads(x, self.active(x))
        return [Polyhedron.from_generators(G, n=self.n)]

    proximal = limiting

    def d1(self, x, u):
        return float(np.max(self.grads(x, self.active(x)) @ u))

    def so_model(self, x, u):
        A = self.active(x)
        G = self.grads(x, A)
        s = G @ u
        top = s.max()
        sel = [i for i, si in zip(A, s) if si >= top - 1e-9 * (1 + abs(top))]
        grp = [(float(u @ self.pieces[i].hess(x) @ u), self.pieces[i].grad(x)) for i in sel]
        return SOModel(self.n, max_groups=[grp])

    def strata(self, max_size):
        for k in range(1, min(len(self.pieces), max_size) + 1):
            for S in itertools.combinations(range(len(self.pieces)), k):
                p0 = self.pieces[S[0]]
                yield PolySel(p0), [p0 - self.pieces[j] for j in S[1:]], ("max", S)

    def pattern(self, x):
        return tuple(int(i) for i in self.active(x))

    def pattern_equations(self, pattern):
        p0 = self.pieces[pattern[0]]
        return [p0 - self.pieces[j] for j in pattern[1:]]

    def compose(self, maps, G, y):
        return _max_or_smooth([p.compose(maps) for p in self.pieces])


class MinTerm(MaxTerm):
    def __init__(self, pieces):
        super().__init__(pieces)

    def value_many(self, X):
        return np.min(np.stack([p.eval_many(X) for p in self.pieces]), axis=0)

    def active(self, x, tol=ACTIVE_TOL):
        return _active_min(self.values(x), tol)

    def essential_groups(self, x):
        """Gradient groups of active pieces that are strictly minimal on an open cone of directions."""
        A = self.active(x)
        G = self.grads(x, A)
        groups = _group_gradients(G)
        if len(groups) == 1:
            return [G[groups[0][0]]]
        if len(groups) == 2:
            # d = gi - gj separates two distinct gradients
            return [G[g[0]] for g in groups]
        if self.n == 1:
            reps = [float(G[g[0]][0]) for g in groups]
            return [G[groups[j][0]] for j in range(len(groups)) if reps[j] in (min(reps), max(reps))]
        out = []
        for j, grp in enumerate(groups):
            gj = G[grp[0]]
            others = [G[g[0]] for i, g in enumerate(groups) if i != j]
            # maximise s subject to (gj - gi).d + s <= 0, |d|_inf <= 1
            A_ub = np.array([np.append(gj - gi, 1.0) for gi in others])
            res = linprog(np.append(np.zeros(self.n), -1.0), A_ub=A_ub, b_ub=np.zeros(len(others)),
                          bounds=[(-1, 1)] * self.n + [(None, 1.0)], method="highs")
            if res.status == 0 and -res.fun > 1e-9:
                out.append(gj)
        return out

    @property
    def regular(self):
        return len(self.pieces) == 1

    def is_regular_at(self, x):
        return len(self.essential_groups(x)) <= 1

    def limiting(self, x):
        return [Polyhedron.from_generators(g[None, :], n=self.n) for g in self.essential_groups(x)]

    def proximal(self, x):
        E = self.essential_groups(x)
        return [Polyhedron.from_generators(E[0][None, :], n=self.n)] if len(E) == 1 else []

    def d1(self, x, u):
        return float(np.min(self.grads(x, self.active(x)) @ u))

    def so_model(self, x, u):
        A = self.active(x)
        G = self.grads(x, A)
        s = G @ u
        bot = s.min()
        sel = [i for i, si in zip(A, s) if si <= bot + 1e-9 * (1 + abs(bot))]
        grp = [(float(u @ self.pieces[i].hess(x) @ u), self.pieces[i].grad(x)) for i in sel]
        return SOModel(self.n, min_groups=[grp])

    def compose(self, maps, G, y):
        pieces = _dedupe_polys([p.compose(maps) for p in self.pieces])
        return pieces[0] if len(pieces) == 1 else MinTerm(pieces)


class L2Term(Term):
    """x ↦ |Ax + c| with m >= 2 rows."""

    def __init__(self, A, c):
        self.A = np.atleast_2d(np.asarray(A, float))
        self.c = np.asarray(c, float).reshape(-1)
        self.n = self.A.shape[1]

    def value_many(self, X):
        return np.linalg.norm(X @ self.A.T + self.c[None, :], axis=1)

    def z(self, x):
        return self.A @ x + self.c

    def at_kink(self, x):
        return np.linalg.norm(self.z(x)) <= ACTIVE_TOL

    def _ball_radius(self):
        s = np.linalg.svd(self.A, compute_uv=False)
        if self.A.shape[0] < self.n or s.max() - s.min() > 1e-12 * max(1.0, s.max()):
            raise NotExactError("kink subdifferential of |Ax+c| is an ellipsoid, outside the class")
        return float(s[0])

    def limiting(self, x):
        if self.at_kink(x):
            return [Ball(np.zeros(self.n), self._ball_radius())]
        return [Polyhedron.from_generators(L2Sel(self.A, self.c).grad(x)[None, :], n=self.n)]

    proximal = limiting

    def d1(self, x, u):
        if self.at_kink(x):
            return float(np.linalg.norm(self.A @ u))
        return float(L2Sel(self.A, self.c).grad(x) @ u)

    def so_model(self, x, u):
        if self.at_kink(x):
            Au = self.A @ u
            na = np.linalg.norm(Au)
            if na <= 1e-12:
                if np.linalg.norm(u) <= 1e-12:
                    raise NotExactError("second-order model at u = 0 of a norm kink")
                raise NotExactError("direction in the kernel of the norm's linear map")
            return SOModel(self.n, g0=self.A.T @ Au / na)
        sel = L2Sel(self.A, self.c)
        return SOModel(self.n, q0=float(u @ sel.hess(x) @ u), g0=sel.grad(x))

    def strata(self, max_size):
        yield L2Sel(self.A, self.c), [], ("l2", "smooth")
        rows = [Poly.linear(a, ci) for a, ci in zip(self.A, self.c)]
        yield PolySel(Poly(self.n)), rows, ("l2", "kink")

    def pattern(self, x):
        return ("kink",) if self.at_kink(x) else ("smooth",)

    def pattern_equations(self, pattern):
        if pattern == ("kink",):
            return [Poly.linear(a, ci) for a, ci in zip(self.A, self.c)]
        return []

    def compose(self, maps, G, y):
        if not G.is_affine:
            raise NotExactError("Euclidean norm composed with a nonlinear map is outside the class")
        AG, cG = G.affine_parts()
        return L2Term(self.A @ AG, self.A @ (cG + y) + self.c)


class ConstraintTerm(Term):
    """Indicator of {x : g_k(x) <= 0 for all k}."""

    regular = True
    lipschitz = False

    def __init__(self, gs):
        self.gs = _dedupe_polys(gs)
        self.n = self.gs[0].n
        self._scale = np.array([1.0 + abs(g.coeff((0,) * self.n)) for g in self.gs])

    @property
    def is_polyhedral(self):
        return all(g.degree <= 1 for g in self.gs)

    def gvals(self, X):
        return np.stack([g.eval_many(X) for g in self.gs], axis=1)

    def value_many(self, X):
        ok = np.all(self.gvals(X) <= FEAS_TOL * self._scale[None, :], axis=1)
        return np.where(ok, 0.0, np.inf)

    def active(self, x, tol=ACTIVE_TOL):
        vals = np.array([g(x) for g in self.gs])
        return np.flatnonzero(np.abs(vals) <= tol * self._scale)

    def _grads(self, x, A):
        return np.array([self.gs[i].grad(x) for i in A]).reshape(-1, self.n)

    def check_mfcq(self, x, A=None):
        A = self.active(x) if A is None else A
        nl = [i for i in A if self.gs[i].degree > 1]
        if not nl:
            return True
        lin = [i for i in A if self.gs[i].degree <= 1]
        rows = [self.gs[i].grad(x) for i in nl] + [self.gs[i].grad(x) for i in lin]
        rhs = [-1.0] * len(nl) + [0.0] * len(lin)
        res = linprog(np.zeros(self.n), A_ub=np.array(rows), b_ub=np.array(rhs),
                      bounds=[(-1e6, 1e6)] * self.n, method="highs")
        return res.status == 0

    def _require_exact(self, x, A):
        if not self.check_mfcq(x, A):
            raise NotExactError("curved constraints without a Mangasarian-Fromovitz direction")

    def normal_cone(self, x) -> ConeRep:
        A = self.active(x)
        if len(A) == 0:
            return ConeRep.trivial(self.n)
        self._require_exact(x, A)
        G = self._grads(x, A)
        G = G[np.linalg.norm(G, axis=1) > 1e-14]
        if G.shape[0] == 0:
            return ConeRep.trivial(self.n)
        return ConeRep(self.n, rays=G)

    def tangent_rows(self, x, A=None):
        A = self.active(x) if A is None else A
        return self._grads(x, A)

    def limiting(self, x):
        A = self.active(x)
        if len(A) == 0:
            return [Polyhedron.from_generators(np.zeros((1, self.n)), n=self.n)]
        self._require_exact(x, A)
        G = self._grads(x, A)
        return [Polyhedron.from_generators(np.zeros((1, self.n)), rays=G, n=self.n)]

    proximal = limiting

    def horizon(self, x) -> ConeRep:
        return self.normal_cone(x)

    def in_tangent(self, x, u, tol=1e-9):
        A = self.active(x)
        if len(A) == 0:
            return True
        self._require_exact(x, A)
        G = self._grads(x, A)
        return bool(np.all(G @ u <= tol * (1 + np.linalg.norm(G, axis=1)) * (1 + np.linalg.norm(u))))

    def d1(self, x, u):
        return 0.0 if self.in_tangent(x, u) else np.inf

    def so_model(self, x, u):
        if not self.in_tangent(x, u):
            return SOModel(self.n, infinite=True)
        A = self.active(x)
        m = SOModel(self.n)
        for i in A:
            g = self.gs[i]
            gr = g.grad(x)
            if abs(gr @ u) <= 1e-9 * (1 + np.linalg.norm(gr)) * (1 + np.linalg.norm(u)):
                m.A_ub.append(gr)
                m.b_ub.append(-float(u @ g.hess(x) @ u))
        return m

    def strata(self, max_size):
        for k in range(0, min(len(self.gs), max_size) + 1):
            for S in itertools.combinations(range(len(self.gs)), k):
                yield PolySel(Poly(self.n)), [self.gs[j] for j in S], ("con", S)

    def pattern(self, x):
        return tuple(int(i) for i in self.active(x))

    def pattern_equations(self, pattern):
        return [self.gs[i] for i in pattern]

    def compose(self, maps, G, y):
        return ConstraintTerm([g.compose(maps) for g in self.gs])


def _max_or_smooth(pieces):
    pieces = _dedupe_polys(pieces)
    return pieces[0] if len(pieces) == 1 else MaxTerm(pieces)


# lowering

@dataclass
class Lowered:
    n: int
    smooth: Poly
    terms: list

    def value_many(self, X) -> np.ndarray:
        X = np.asarray(X, float).reshape(-1, self.n)
        out = self.smooth.eval_many(X)
        for t in self.terms:
            out = out + t.value_many(X)
        return out

    def value(self, x) -> float:
        return float(self.value_many(np.asarray(x, float)[None, :])[0])

    def check_domain(self, x) -> np.ndarray:
        x = as_point(x, self.n)
        if not np.isfinite(self.value(x)):
            raise DomainError("point outside the domain")
        return x

    @property
    def constraint(self):
        for t in self.terms:
            if isinstance(t, ConstraintTerm):
                return t
        return None

    @property
    def is_lipschitz(self) -> bool:
        return self.constraint is None


def _combine(n, smooth, terms):
    s = Poly(n)
    out = []
    cons = []
    for t in terms:
        if isinstance(t, Poly):
            s = s + t
        elif isinstance(t, ConstraintTerm):
            cons.extend(t.gs)
        else:
            out.append(t)
    s = s + smooth
    if cons:
        out.append(ConstraintTerm(cons))
    return s, out


def _lower(f: FunctionExpr):
    n = f.n
    if isinstance(f, Polynomial):
        return f.p, []
    if isinstance(f, MaxOfSmooth):
        t = _max_or_smooth(f.pieces)
        return (t, []) if isinstance(t, Poly) else (Poly(n), [t])
    if isinstance(f, MinOfSmooth):
        pieces = _dedupe_polys(f.pieces)
        return (pieces[0], []) if len(pieces) == 1 else (Poly(n), [MinTerm(pieces)])
    if isinstance(f, NormL1):
        pieces = [Poly.linear(s) for s in itertools.product((1.0, -1.0), repeat=n)]
        return Poly(n), [MaxTerm(pieces)]
    if isinstance(f, NormLinf):
        pieces = [Poly.linear(s * e) for e in np.eye(n) for s in (1.0, -1.0)]
        return Poly(n), [MaxTerm(pieces)]
    if isinstance(f, NormL2):
        if n == 1:
            return Poly(n), [MaxTerm([Poly.linear([1.0]), Poly.linear([-1.0])])]
        return Poly(n), [L2Term(np.eye(n), np.zeros(n))]
    if isinstance(f, Indicator):
        if f.P.A.shape[0] == 0:
            return Poly(n), []
        return Poly(n), [ConstraintTerm([Poly.linear(a, -b) for a, b in zip(f.P.A, f.P.b)])]
    if isinstance(f, Sum):
        s, ts = Poly(n), []
        for g in f.terms:
            gs, gt = _lower(g)
            s = s + gs
            ts.extend(gt)
        return _combine(n, s, ts)
    if isinstance(f, Tilted):
        s, ts = _lower(f.base)
        return s - Poly.linear(f.v), ts
    if isinstance(f, SquaredComposite):
        return _lower_squared(f)
    if isinstance(f, Precomposed):
        sh, th = _lower(f.h)
        maps = [g + float(yk) for g, yk in zip(f.G.components, f.y)]
        s = sh.compose(maps)
        ts = [t.compose(maps, f.G, f.y) for t in th]
        return _combine(n, s, ts)
    raise NotExactError(f"no lowering rule for {type(f).__name__}")


def _lower_squared(f: SquaredComposite):
    n = f.n
    s, ts = _lower(f.inner)
    if not ts:
        return s * s, []
    if len(ts) != 1:
        raise NotExactError("square of a sum of several nonsmooth terms")
    t = ts[0]
    if isinstance(t, MaxTerm) and not isinstance(t, MinTerm):
        pieces = [p + s for p in t.pieces]
        pset = set(pieces)
        if all((-p) in pset for p in pieces):
            return Poly(n), [_as_term(_max_or_smooth([p * p for p in pieces]))]
        raise NotExactError("square of a max whose pieces are not closed under negation")
    if isinstance(t, L2Term) and s.is_zero():
        rows = [Poly.linear(a, c) for a, c in zip(t.A, t.c)]
        return sum((r * r for r in rows), Poly(n)), []
    raise NotExactError("no exact rule for this squared composite")


def _as_term(t):
    return t if not isinstance(t, Poly) else MaxTerm([t])


def lower(f: FunctionExpr) -> Lowered:
    cached = getattr(f, "_lowered", None)
    if cached is not None:
        return cached
    s, ts = _lower(f)
    ts = [t for t in ts if not isinstance(t, Poly)]
    L = Lowered(f.n, s, ts)
    try:
        object.__setattr__(f, "_lowered", L)
    except AttributeError:
        pass
    return L


class ConstraintSet:
    """{x : g(x) <= 0 for g in ineqs, h(x) = 0 for h in eqs} with polynomial data."""

    def __init__(self, n: int, ineqs=(), eqs=()):
        self.n = n
        self.ineqs = list(ineqs)
        self.eqs = list(eqs)

    @classmethod
    def from_polyhedron(cls, P: Polyhedron) -> "ConstraintSet":
        return cls(P.n, [Poly.linear(a, -b) for a, b in zip(P.A, P.b)])

    @classmethod
    def from_manifold(cls, M) -> "ConstraintSet":
        return cls(M.n, [], M.equations())

    def contains(self, x, tol: float = 1e-9) -> bool:
        return all(g(x) <= tol for g in self.ineqs) and all(abs(h(x)) <= tol for h in self.eqs)

    def active(self, x, tol: float = ACTIVE_TOL):
        return [g for g in self.ineqs if abs(g(x)) <= tol * (1 + abs(g.coeff((0,) * self.n)))]
