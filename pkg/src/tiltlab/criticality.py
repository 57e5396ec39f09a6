"""Critical points of tilted functions, composite critical pairs, multipliers
and qualification conditions.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linprog
from scipy.stats import qmc

from .errors import DomainError, EnumerationError, NotExactError
from .function_algebra import (
    AffineFace, FunctionExpr, Indicator, ManifoldSpec, SmoothZeroSet, as_point, tilt,
)
from .polyhedra import ConeRep, Polyhedron, cone_intersection_trivial, subspace_intersection_trivial
from .polynomials import Poly, SmoothMap, real_roots
from .terms import ConstraintTerm, L2Sel, L2Term, MaxTerm, MinTerm, PolySel, lower
from . import variational_oracles as vo

MERGE_TOL = 1e-6
ACCEPT_TOL = 1e-8
LOCAL_MIN, NOT_LOCAL_MIN, UNKNOWN = "LocalMin", "NotLocalMin", "Unknown"


@dataclass
class CriticalPoint:
    x: np.ndarray
    value: float
    residual: float
    classification: str = UNKNOWN
    isolated: bool = True

    def to_json(self) -> dict:
        return {"x": self.x.tolist(), "value": self.value, "residual": self.residual,
                "classification": self.classification, "isolated": self.isolated}


def critical_residual(f: FunctionExpr, x, v) -> float:
    """dist(v, ∂f(x)), the distance from 0 to ∂f_v(x)."""
    try:
        S = vo.limiting_subdiff(f, x)
    except DomainError:
        return np.inf
    return S.distance(as_point(v, f.n))


def _merge(points, tol=MERGE_TOL):
    out = []
    for p in points:
        for q in out:
            if np.linalg.norm(p.x - q.x) <= tol:
                q.isolated = q.isolated and p.isolated
                if p.residual < q.residual:
                    q.x, q.residual = p.x, p.residual
                break
        else:
            out.append(p)
    return out


def _accept(f, v, x, isolated=True):
    x = np.asarray(x, float)
    val = f.evaluate(x) - float(v @ x)
    if not np.isfinite(val):
        return None
    try:
        r = critical_residual(f, x, v)
    except NotExactError:
        return None
    if r <= ACCEPT_TOL:
        return CriticalPoint(x.copy(), float(val), float(r), UNKNOWN, isolated)
    return None


# one dimension: exact

def _enumerate_1d(f, L, v):
    vv = float(v[0])
    pieces_terms = [t for t in L.terms if isinstance(t, MaxTerm)]
    if any(isinstance(t, L2Term) for t in L.terms):
        raise EnumerationError("Euclidean-norm term in one variable is outside the exact subclass")
    con = L.constraint
    breaks = []
    for t in pieces_terms:
        for p, q in itertools.combinations(t.pieces, 2):
            r = real_roots(p - q)
            if r is not None:
                breaks.extend(r.tolist())
    if con is not None:
        for g in con.gs:
            r = real_roots(g)
            if r is not None:
                breaks.extend(r.tolist())
    breaks = sorted(set(breaks))
    merged = []
    for b in breaks:
        if not merged or abs(b - merged[-1]) > 1e-12 * (1 + abs(b)):
            merged.append(b)
    breaks = merged
    edges = [-np.inf] + breaks + [np.inf]
    cands = [(b, True) for b in breaks]
    continuum_edges = set()
    for a, b in zip(edges[:-1], edges[1:]):
        if np.isinf(a) and np.isinf(b):
            mid = 0.0
        elif np.isinf(a):
            mid = b - 1.0
        elif np.isinf(b):
            mid = a + 1.0
        else:
            mid = 0.5 * (a + b)
        xm = np.array([mid])
        if con is not None and any(g(xm) > 0 for g in con.gs):
            continue
        phi = L.smooth
        for t in pieces_terms:
            vals = t.values(xm)
            i = int(np.argmin(vals)) if isinstance(t, MinTerm) else int(np.argmax(vals))
            phi = phi + t.pieces[i]
        D = phi.partial(0) - vv
        roots = real_roots(D)
        if roots is None:
            cands.append((mid, False))
            if np.isfinite(a):
                continuum_edges.add(a)
            if np.isfinite(b):
                continuum_edges.add(b)
            continue
        for r in roots:
            if a < r < b:
                cands.append((float(r), True))
    out = []
    for c, iso in cands:
        if c in continuum_edges:
            iso = False
        p = _accept(f, v, np.array([c]), iso)
        if p is not None:
            out.append(p)
    return _merge(out)


# two and three dimensions: multistart Newton on strata

def _sel_batch(sel, X):
    if isinstance(sel, PolySel):
        return sel.p.grad_many(X), sel.p.hess_many(X)
    if isinstance(sel, L2Sel):
        G = np.array([sel.grad(x) for x in X])
        H = np.array([sel.hess(x) for x in X])
        return G, H
    raise TypeError


def _strata(L, n):
    per_term = [list(t.strata(n + 1)) for t in L.terms]
    for combo in itertools.product(*per_term) if per_term else [()]:
        eqs = [e for (_, es, _) in combo for e in es]
        if len(eqs) > n:
            continue
        yield [s for (s, _, _) in combo], eqs, tuple(lbl for (_, _, lbl) in combo)


def _newton_stratum(L, sels, eqs, v, starts, iters=60):
    n = L.n
    S = starts.shape[0]
    k = len(eqs)
    X = starts.copy()

    def pieces(X):
        m = X.shape[0]
        G, H = L.smooth.grad_many(X), L.smooth.hess_many(X)
        for s in sels:
            g, h = _sel_batch(s, X)
            G, H = G + g, H + h
        if k:
            E = np.stack([e.eval_many(X) for e in eqs], axis=1)
            JE = np.stack([e.grad_many(X) for e in eqs], axis=1)
            HE = np.stack([e.hess_many(X) for e in eqs], axis=1)
        else:
            E, JE, HE = np.zeros((m, 0)), np.zeros((m, 0, n)), np.zeros((m, 0, n, n))
        return G, H, E, JE, HE

    G, H, E, JE, HE = pieces(X)
    lam = np.zeros((S, k))
    if k:
        for s in range(S):
            lam[s] = np.linalg.lstsq(JE[s].T, -(G[s] - v), rcond=None)[0]

    def resid(G, E, JE, lam):
        r1 = G - v[None, :] + np.einsum("skn,sk->sn", JE, lam)
        return np.concatenate([r1, E], axis=1)

    F = resid(G, E, JE, lam)
    tol = 1e-13 * (1 + np.linalg.norm(v))
    live = np.ones(S, dtype=bool)
    for _ in range(iters):
        nrm = np.linalg.norm(F, axis=1)
        live &= np.isfinite(nrm) & (nrm > tol)
        idx = np.flatnonzero(live)
        if idx.size == 0:
            break
        lam_i = lam[idx]
        J = np.zeros((idx.size, n + k, n + k))
        J[:, :n, :n] = H[idx] + np.einsum("sk,sknm->snm", lam_i, HE[idx])
        J[:, :n, n:] = np.transpose(JE[idx], (0, 2, 1))
        J[:, n:, :n] = JE[idx]
        step = -np.einsum("sij,sj->si", np.linalg.pinv(J), F[idx])
        step_len = np.linalg.norm(step, axis=1)
        step *= np.minimum(1.0, 10.0 / np.maximum(step_len, 1e-300))[:, None]
        t = 1.0
        pend = np.arange(idx.size)  # positions in idx still backtracking
        for _h in range(12):
            rows = idx[pend]
            Xn = X[rows] + t * step[pend, :n]
            ln = lam[rows] + t * step[pend, n:]
            Gn, Hn, En, JEn, HEn = pieces(Xn)
            Fn = resid(Gn, En, JEn, ln)
            better = np.linalg.norm(Fn, axis=1) < nrm[rows]
            acc = rows[better]
            X[acc], lam[acc] = Xn[better], ln[better]
            G[acc], H[acc], E[acc], JE[acc], HE[acc], F[acc] = (Gn[better], Hn[better], En[better],
                                                                JEn[better], HEn[better], Fn[better])
            pend = pend[~better]
            if pend.size == 0:
                break
            t *= 0.5
        # rows with no decrease after all halvings have stalled
        live[idx[pend]] = False
    nrm = np.linalg.norm(F, axis=1)
    ok = np.isfinite(nrm) & (nrm <= 1e-9 * (1 + np.linalg.norm(v)))
    iso = np.ones(S, dtype=bool)
    J = np.zeros((S, n + k, n + k))
    J[:, :n, :n] = H + np.einsum("sk,sknm->snm", lam, HE)
    J[:, :n, n:] = np.transpose(JE, (0, 2, 1))
    J[:, n:, :n] = JE
    for s in np.flatnonzero(ok):
        sv = np.linalg.svd(J[s], compute_uv=False)
        iso[s] = sv.min() > 1e-8 * max(1.0, sv.max())
    return X[ok], iso[ok]


def _halton_box(lo, hi, count, seed):
    sampler = qmc.Halton(d=lo.size, scramble=True, seed=seed)
    return lo + (hi - lo) * sampler.random(count)


def _enumerate_newton(f, L, v, box, starts, seed, hints):
    n = L.n
    lo, hi = (np.full(n, -5.0), np.full(n, 5.0)) if box is None else (as_point(box[0], n), as_point(box[1], n))
    X0 = _halton_box(lo, hi, starts, seed)
    found = []
    for sels, eqs, _lbl in _strata(L, n):
        X, iso = _newton_stratum(L, sels, eqs, v, X0)
        for x, i in zip(X, iso):
            p = _accept(f, v, x, bool(i))
            if p is not None:
                found.append(p)
    for h in list(hints) + [np.zeros(n)]:
        p = _accept(f, v, as_point(h, n), True)
        if p is not None:
            found.append(p)
    out = _merge(found)
    return sorted(out, key=lambda p: tuple(p.x))


def enumerate_critical_points(f: FunctionExpr, v, box=None, starts: int = 48, seed: int = 0,
                              hints=()) -> list:
    """All x with 0 ∈ ∂f_v(x).  Exact in one variable; multistart Newton on strata for n = 2, 3."""
    v = as_point(v, f.n)
    L = lower(f)
    if L.n == 1:
        pts = _enumerate_1d(f, L, v)
    elif L.n <= 3 or box is not None:
        pts = _enumerate_newton(f, L, v, box, starts, seed, hints)
    else:
        raise EnumerationError("exact enumeration limited to n <= 3 without a bounding box")
    return sorted(pts, key=lambda p: tuple(p.x))


def local_critical_points(f: FunctionExpr, v, x0, radius: float = 0.1) -> list:
    """Critical points of f_v within radius of x0; exact in one variable, Newton from x0 otherwise."""
    v = as_point(v, f.n)
    x0 = as_point(x0, f.n)
    L = lower(f)
    if L.n == 1:
        pts = _enumerate_1d(f, L, v)
    else:
        ring = [x0] + [x0 + 1e-3 * s * e for e in np.eye(L.n) for s in (1.0, -1.0)]
        starts = np.array(ring)
        found = []
        for sels, eqs, _lbl in _strata(L, L.n):
            X, iso = _newton_stratum(L, sels, eqs, v, starts.copy())
            for x, i in zip(X, iso):
                p = _accept(f, v, x, bool(i))
                if p is not None:
                    found.append(p)
        pts = _merge(found)
    pts = [p for p in pts if np.linalg.norm(p.x - x0) <= radius]
    return sorted(pts, key=lambda p: float(np.linalg.norm(p.x - x0)))


# classification

RADII = (1e-2, 1e-3, 1e-4, 1e-5, 1e-6)


def _ball_samples(n, count, seed):
    if n == 1:
        return np.linspace(-1.0, 1.0, count + (count % 2 == 0))[:, None]
    sampler = qmc.Sobol(d=n, scramble=True, seed=seed)
    m = int(np.ceil(np.log2(count)))
    P = 2.0 * sampler.random_base2(m)[:count] - 1.0
    return P[np.linalg.norm(P, axis=1) <= 1.0]


def shell_gap(f: FunctionExpr, v, x, r: float, samples: int = 10_000, seed: int = 0) -> float:
    """min of f_v(z) - f_v(x) over sampled z with r/4 <= |z - x| <= r (+inf if none finite)."""
    x = as_point(x, f.n)
    B = _ball_samples(f.n, samples, seed)
    nb = np.linalg.norm(B, axis=1)
    B = B[nb >= 0.25]
    Z = x[None, :] + r * B
    vals = f.evaluate_many(Z) - Z @ v
    f0 = f.evaluate(x) - float(v @ x)
    vals = vals[np.isfinite(vals)]
    return float(vals.min() - f0) if vals.size else np.inf


def no_lower_value(f: FunctionExpr, v, x, r: float = 1e-2, samples: int = 10_000, seed: int = 0) -> bool:
    """Brute-force check: no sampled point of B_r(x) has a strictly lower tilted value."""
    x = as_point(x, f.n)
    v = as_point(v, f.n)
    Z = x[None, :] + r * _ball_samples(f.n, samples, seed)
    vals = f.evaluate_many(Z) - Z @ v
    f0 = f.evaluate(x) - float(v @ x)
    return bool(np.all(vals >= f0 - 1e-12 * (1 + abs(f0))))


def second_order_necessary(f: FunctionExpr, v, x, samples: int = 48, seed: int = 0):
    """inf_w d²f_v(x)(u|w) >= 0 on sampled unit directions of the critical cone (None if not exact)."""
    try:
        C = vo.critical_cone(f, x, v)
        U = C.unit_samples(samples, np.random.default_rng(seed))
        return all(vo.inf_parabolic(f, x, u, v) >= -1e-8 for u in U)
    except NotExactError:
        return None


def classify_critical_point(f: FunctionExpr, v, x, samples: int = 10_000, seed: int = 0) -> str:
    v = as_point(v, f.n)
    x = as_point(x, f.n)
    f0 = f.evaluate(x) - float(v @ x)
    tol = 1e-13 * (1 + abs(f0))
    decided = None
    for r in reversed(RADII):
        g = shell_gap(f, v, x, r, samples, seed)
        if g > tol:
            decided = True
            break
        if g < -tol:
            decided = False
            break
    nec = second_order_necessary(f, v, x, seed=seed)
    if decided is False or nec is False:
        return NOT_LOCAL_MIN
    if nec is None:
        return UNKNOWN
    if decided is True:
        return LOCAL_MIN
    return LOCAL_MIN if no_lower_value(f, v, x, RADII[0], samples, seed) else UNKNOWN


# active patterns and manifolds

def active_pattern(f: FunctionExpr, x) -> tuple:
    L = lower(f)
    x = as_point(x, f.n)
    return tuple(t.pattern(x) for t in L.terms)


def pattern_manifold(f: FunctionExpr, x, pattern=None) -> ManifoldSpec:
    """Zero set of the tie and active-constraint equations of a pattern, as a manifold near x."""
    L = lower(f)
    x = as_point(x, f.n)
    pattern = active_pattern(f, x) if pattern is None else pattern
    eqs = []
    for t, p in zip(L.terms, pattern):
        eqs.extend(t.pattern_equations(p))
    keep, rows = [], []
    for e in eqs:
        g = e.grad(x)
        cand = np.array(rows + [g])
        if np.linalg.matrix_rank(cand, tol=1e-8) > len(rows):
            keep.append(e)
            rows.append(g)
        elif e.degree > 1:
            raise ValueError("active pattern does not cut out a manifold at the point")
        elif abs(e(x)) > 1e-8:
            raise ValueError("inconsistent linear equations in the active pattern")
    if not keep:
        return AffineFace.whole_space(f.n)
    if all(e.degree <= 1 for e in keep):
        A = np.array([e.affine_parts()[0] for e in keep])
        b = -np.array([e.affine_parts()[1] for e in keep])
        return AffineFace.from_equations(A, b)
    return SmoothZeroSet(SmoothMap(keep, f.n), x)


# composite problems

@dataclass
class QualFlags:
    bcq: bool
    licq_analogue: bool
    nondegeneracy: bool | None

    def to_json(self):
        return {"bcq": self.bcq, "licq_analogue": self.licq_analogue, "nondegeneracy": self.nondegeneracy}


@dataclass
class GeneralizedEquationResidual:
    r_v: float
    r_y: float
    status: str = "ok"

    def to_json(self):
        return {"r_v": self.r_v, "r_y": self.r_y, "status": self.status}


@dataclass
class CriticalPair:
    x: np.ndarray
    lam: np.ndarray
    w: np.ndarray
    residuals: tuple
    qual_flags: QualFlags | None = None
    multiplier_unique: bool = False
    status: str = "CONVERGED"
    iterations: int = 0
    others: list = field(default_factory=list)

    def to_json(self):
        return {"x": self.x.tolist(), "lambda": self.lam.tolist(), "w": self.w.tolist(),
                "residuals": list(self.residuals), "status": self.status,
                "multiplier_unique": self.multiplier_unique,
                "qual_flags": None if self.qual_flags is None else self.qual_flags.to_json()}


@dataclass
class CompositeProblem:
    f: FunctionExpr
    h: FunctionExpr
    G: SmoothMap
    v: np.ndarray
    y: np.ndarray

    def __post_init__(self):
        self.v = as_point(self.v, self.G.n)
        self.y = as_point(self.y, self.G.m)
        if self.f.n != self.G.n or self.h.n != self.G.m:
            from .errors import DimensionError

            raise DimensionError("composite data dimensions disagree")

    def z(self, x):
        return self.G.value(x) + self.y

    def natural_map(self, xl, c: float = 1.0):
        n = self.G.n
        x, lam = xl[:n], xl[n:]
        J = self.G.jacobian(x)
        z = self.z(x)
        q = x + (self.v - J.T @ lam) / c
        if not (np.all(np.isfinite(q)) and np.all(np.isfinite(z + lam))):
            return np.full(n + lam.size, np.inf)
        px = vo.prox(self.f, x + (self.v - J.T @ lam) / c, c)[0]
        pz = vo.prox(self.h, z + lam / c, c)[0]
        return np.concatenate([x - px, z - pz])


def _fd_jacobian(F, z, h=1e-7):
    f0 = F(z)
    J = np.zeros((f0.size, z.size))
    for i in range(z.size):
        e = np.zeros(z.size)
        e[i] = h
        J[:, i] = (F(z + e) - F(z - e)) / (2 * h)
    return J


def _newton_natural(P: CompositeProblem, x0, l0, tol=1e-12, max_iter=200):
    z = np.concatenate([as_point(x0, P.G.n), as_point(l0, P.G.m)])
    F = P.natural_map
    r = F(z)
    it = 0
    hist = []
    for it in range(1, max_iter + 1):
        nr = np.linalg.norm(r)
        if nr <= tol:
            return z, nr, it, True
        hist.append(nr)
        if len(hist) > 5 and nr > 0.9 * hist[-6]:
            break  # stagnating: a local minimum of the residual, not a zero
        J = _fd_jacobian(F, z)
        step = -np.linalg.lstsq(J, r, rcond=None)[0]
        t = 1.0
        for _ in range(30):
            zn = z + t * step
            rn = F(zn)
            if np.linalg.norm(rn) < (1 - 1e-4 * t) * nr:
                break
            t *= 0.5
        else:
            break
        z, r = zn, rn
    # splitting fallback: damped fixed-point iteration on the natural map
    beta = 0.5
    r0 = max(np.linalg.norm(r), 1e-300)
    best, k_best = np.inf, 0
    for k in range(2000):
        nr = np.linalg.norm(r)
        if nr <= tol:
            return z, nr, it + k, True
        if nr < 0.999 * best:
            best, k_best = nr, k
        if not np.isfinite(nr) or nr > 1e3 * r0 or k - k_best > 20:
            break
        z = z - beta * r
        r = F(z)
    return z, float(np.linalg.norm(r)), it + k, bool(np.linalg.norm(r) <= tol)


def inverse_subdiff_distance(h: FunctionExpr, lam, z) -> float:
    """dist(z, (∂h)⁻¹(λ)); +inf when λ is outside the range of ∂h."""
    lam = as_point(lam, h.n)
    z = as_point(z, h.n)
    if isinstance(h, Indicator):
        P = h.P
        res = linprog(-lam, A_ub=P.A, b_ub=P.b, bounds=[(None, None)] * h.n, method="highs")
        if res.status == 3:
            return np.inf
        if res.status != 0:
            raise NotExactError(f"exposed-face LP failed: {res.message}")
        sigma = -res.fun
        if np.linalg.norm(lam) == 0:
            return P.distance(z)
        F = Polyhedron(np.vstack([P.A, -lam[None, :]]), np.append(P.b, -sigma + 1e-12 * (1 + abs(sigma))), h.n)
        return F.distance(z)
    if h.is_convex:
        from .fenchel_duality import conjugate

        hs = conjugate(h)
        if not np.isfinite(hs.evaluate(lam)):
            return np.inf
        return vo.limiting_subdiff(hs, lam).distance(z)
    if h.n == 1:
        pts = enumerate_critical_points(h, lam)
        if not pts:
            return np.inf
        return float(min(np.linalg.norm(p.x - z) for p in pts))
    raise NotExactError("inverse subdifferential of a nonconvex outer function in dimension > 1")


def residual(pair: CriticalPair, P: CompositeProblem) -> GeneralizedEquationResidual:
    x, lam = pair.x, pair.lam
    J = P.G.jacobian(x)
    try:
        r_v = vo.limiting_subdiff(P.f, x).distance(P.v - J.T @ lam)
    except DomainError:
        r_v = np.inf
    r_y = inverse_subdiff_distance(P.h, lam, P.z(x))
    status = "ok" if np.isfinite(r_y) else "NoMultiplierMatch"
    return GeneralizedEquationResidual(float(r_v), float(r_y), status)


def check_qualifications(f: FunctionExpr, h: FunctionExpr, G: SmoothMap, x, y,
                         manifolds: tuple | None = None) -> QualFlags:
    x = as_point(x, G.n)
    y = as_point(y, G.m)
    z = G.value(x) + y
    if not (np.isfinite(f.evaluate(x)) and np.isfinite(h.evaluate(z))):
        raise DomainError("qualification check outside the domain")
    J = G.jacobian(x)
    K1 = vo.horizon_subdiff(h, z)
    K2 = vo.horizon_subdiff(f, x)
    bcq = cone_intersection_trivial(K1, -J.T, K2) if not K1.is_trivial() else True
    try:
        B1 = vo.limiting_subdiff(h, z).para_basis()
        B2 = vo.limiting_subdiff(f, x).para_basis()
        licq = subspace_intersection_trivial(B1, J.T, B2)
    except NotExactError:
        licq = False
    nondeg = None
    try:
        if manifolds is None:
            K, M = pattern_manifold(h, z), pattern_manifold(f, x)
        else:
            K, M = manifolds
        NK = K.normal_basis(z)
        NM = M.normal_basis(x)
        nondeg = subspace_intersection_trivial(NK, J.T, NM)
    except ValueError:
        nondeg = None
    return QualFlags(bool(bcq), bool(licq), nondeg)


DEFAULT_STARTS = ((-1.5, 0.5), (-0.5, 0.5), (0.5, 0.5), (1.5, 0.5))


def _as_start(s, k):
    return np.full(k, float(s)) if np.ndim(s) == 0 else np.asarray(s, float).reshape(k)


def solve_composite_critical(f: FunctionExpr, h: FunctionExpr, G: SmoothMap, v, y, x0, lam0,
                             tol: float = 1e-10, extra_starts=DEFAULT_STARTS) -> CriticalPair:
    """Semismooth Newton on the natural map; other starts detect non-isolated solutions."""
    P = CompositeProblem(f, h, G, v, y)
    n, m = G.n, G.m
    runs = [_newton_natural(P, _as_start(x0, n), _as_start(lam0, m))]
    for xs, ls in extra_starts:
        runs.append(_newton_natural(P, _as_start(xs, n), _as_start(ls, m)))
    conv = [r for r in runs if r[3] and r[1] <= tol and np.all(np.isfinite(r[0]))]
    if conv:
        z, _, it, _ = conv[0]
        status = "CONVERGED"
    else:
        fin = [r for r in runs if np.all(np.isfinite(r[0])) and np.isfinite(r[1])]
        z, _, it, _ = min(fin, key=lambda r: r[1]) if fin else runs[0]
        status = "MAX_ITERATIONS"
    distinct = []
    for r in conv:
        if all(np.linalg.norm(r[0] - d) > 1e-4 for d in distinct):
            distinct.append(r[0])
    if len(distinct) > 1:
        status = "NON_ISOLATED"
    x, lam = z[:n], z[n:]
    if not (np.all(np.isfinite(x)) and np.all(np.isfinite(lam))):
        return CriticalPair(x, lam, np.full(n, np.nan), (np.inf, np.inf), status="DIVERGED", iterations=it)
    pair = CriticalPair(x, lam, -G.jacobian(x).T @ lam, (np.inf, np.inf), status=status, iterations=it,
                        others=[d.tolist() for d in distinct])
    try:
        res = residual(pair, P)
        pair.residuals = (res.r_v, res.r_y)
        if status == "CONVERGED" and max(res.r_v, res.r_y) > 1e-8:
            pair.status = "RESIDUAL_TOO_LARGE"
    except NotExactError:
        pass
    try:
        pair.qual_flags = check_qualifications(f, h, G, pair.x, y)
        pair.multiplier_unique = bool(pair.qual_flags.licq_analogue)
    except (DomainError, NotExactError):
        pair.qual_flags = None
    return pair
