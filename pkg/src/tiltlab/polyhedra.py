"""Polyhedra in H-representation with double-description V-representation.

Also houses the Euclidean ball (the subdifferential of the 2-norm at its kink)
and polyhedral cones, so that all convex pieces share one small protocol:
contains, relative_interior_contains, support, project, para_basis, dim.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np
import scipy.linalg
import quadprog

from .errors import BudgetError, DimensionError, EmptySetError, NotExactError

DEFAULT_TOL = 1e-9
DD_TOL = 1e-10
MAX_DIM = 8
FACE_BUDGET = 100_000


def _orthonormal_rows(M: np.ndarray, tol: float = 1e-10) -> np.ndarray:
    """Orthonormal basis (as rows) of the row space of M."""
    M = np.asarray(M, float)
    if M.size == 0:
        return np.zeros((0, M.shape[1] if M.ndim == 2 else 0))
    _, S, Vt = np.linalg.svd(M, full_matrices=False)
    r = int((S > tol * max(1.0, S[0])).sum()) if S.size else 0
    return Vt[:r]


def null_space(M: np.ndarray, tol: float = 1e-10) -> np.ndarray:
    """Orthonormal basis (as rows) of {z : M z = 0}."""
    M = np.atleast_2d(np.asarray(M, float))
    d = M.shape[1]
    if M.shape[0] == 0 or not np.any(M):
        return np.eye(d)
    _, S, Vt = np.linalg.svd(M)
    r = int((S > tol * max(1.0, S[0])).sum())
    return Vt[r:]


def cone_dd(M, tol: float = DD_TOL):
    """Extreme rays and a lineality basis of the cone {z : M z <= 0}.

    Double description: lineality is split off by SVD, an initial simplicial
    cone is built from r independent rows and the remaining rows are inserted
    one at a time, combining adjacent (+, -) ray pairs.
    """
    M = np.asarray(M, float)
    if M.ndim == 1:
        M = M.reshape(1, -1)
    d = M.shape[1]
    if M.shape[0]:
        norms = np.linalg.norm(M, axis=1)
        M = M[norms > tol] / norms[norms > tol, None]
    if M.shape[0] == 0:
        return np.zeros((0, d)), np.eye(d)
    _, S, Vt = np.linalg.svd(M)
    r = int((S > tol * max(1.0, S[0])).sum())
    lineality = Vt[r:]
    if r == 0:
        return np.zeros((0, d)), lineality
    B = Vt[:r]
    Mr = M @ B.T
    # pivoted QR picks a well-conditioned set of r independent rows
    chosen = sorted(int(i) for i in scipy.linalg.qr(Mr.T, pivoting=True, mode="r")[1][:r])
    R = -np.linalg.inv(Mr[chosen]).T
    R /= np.linalg.norm(R, axis=1)[:, None]
    inc = np.abs(R @ Mr[chosen].T) <= tol
    rest = [i for i in range(Mr.shape[0]) if i not in set(chosen)]
    for i in rest:
        a = Mr[i]
        vals = R @ a
        pos = vals > tol
        neg = vals < -tol
        zer = ~pos & ~neg
        new_rays, new_inc = [], []
        for p in np.flatnonzero(pos):
            for q in np.flatnonzero(neg):
                common = inc[p] & inc[q]
                if common.sum() < r - 2:
                    continue
                sup = np.all(inc[:, common], axis=1)
                sup[p] = sup[q] = False
                if sup.any():
                    continue
                ray = vals[p] * R[q] - vals[q] * R[p]
                ray /= np.linalg.norm(ray)
                new_rays.append(ray)
                new_inc.append(np.append(common, True))
        keep = ~pos
        R_new = R[keep]
        inc_new = np.hstack([inc[keep], zer[keep][:, None]])
        if new_rays:
            R_new = np.vstack([R_new, np.array(new_rays)])
            inc_new = np.vstack([inc_new, np.array(new_inc)])
        R, inc = R_new, inc_new
    rays = R @ B if R.shape[0] else np.zeros((0, d))
    if rays.shape[0]:
        rays /= np.linalg.norm(rays, axis=1)[:, None]
        rays = _dedupe_rows(rays, 1e-9)
    return rays, lineality


def _dedupe_rows(X: np.ndarray, tol: float) -> np.ndarray:
    out: list[np.ndarray] = []
    for x in X:
        if not any(np.linalg.norm(x - y) <= tol * (1 + np.linalg.norm(y)) for y in out):
            out.append(x)
    return np.array(out).reshape(-1, X.shape[1])


@dataclass(frozen=True)
class VRep:
    vertices: np.ndarray
    rays: np.ndarray
    lines: np.ndarray

    @property
    def is_empty(self) -> bool:
        return self.vertices.shape[0] == 0


def hrep_to_vrep(A: np.ndarray, b: np.ndarray, tol: float = DD_TOL) -> VRep:
    n = A.shape[1]
    M = np.vstack([np.hstack([A, -b[:, None]]), np.append(np.zeros(n), -1.0)[None, :]])
    rays, lin = cone_dd(M, tol)
    verts, recs = [], []
    for z in rays:
        if z[n] > tol:
            verts.append(z[:n] / z[n])
        else:
            v = z[:n]
            nv = np.linalg.norm(v)
            if nv > tol:
                recs.append(v / nv)
    lines = _orthonormal_rows(lin[:, :n]) if lin.shape[0] else np.zeros((0, n))
    V = _dedupe_rows(np.array(verts).reshape(-1, n), 1e-9)
    R = _dedupe_rows(np.array(recs).reshape(-1, n), 1e-9)
    V[np.abs(V) < 1e-13] = 0.0
    R[np.abs(R) < 1e-13] = 0.0
    return VRep(V, R, lines)


def vrep_to_hrep(V, R, L, tol: float = DD_TOL):
    V = np.asarray(V, float)
    n = V.shape[1]
    R = np.asarray(R, float).reshape(-1, n)
    L = np.asarray(L, float).reshape(-1, n)
    if V.shape[0] == 0:
        raise EmptySetError("V-representation without points")
    gens = [np.append(v, 1.0) for v in V] + [np.append(r, 0.0) for r in R]
    lines = [np.append(l, 0.0) for l in L]
    Mp = np.array(gens + lines + [-l for l in lines])
    Y, Ly = cone_dd(Mp, tol)
    rows, rhs = [], []
    for y in Y:
        a, beta = y[:n], y[n]
        na = np.linalg.norm(a)
        if na <= 1e-12:
            continue
        rows.append(a / na)
        rhs.append(-beta / na)
    for y in Ly:
        a, beta = y[:n], y[n]
        na = np.linalg.norm(a)
        if na <= 1e-12:
            continue
        rows += [a / na, -a / na]
        rhs += [-beta / na, beta / na]
    A, b = np.array(rows).reshape(-1, n), np.array(rhs)
    A[np.abs(A) < 1e-13] = 0.0
    b[np.abs(b) < 1e-13] = 0.0
    return A, b


class Polyhedron:
    """{x : A x <= b}; rows are normalised to unit length on construction."""

    def __init__(self, A, b, n: int | None = None, *, vrep: VRep | None = None):
        A = np.asarray(A, float)
        if A.size == 0:
            if n is None:
                raise DimensionError("empty constraint matrix needs explicit n")
            A = np.zeros((0, n))
        A = np.atleast_2d(A)
        b = np.asarray(b, float).reshape(-1)
        if A.shape[0] != b.shape[0]:
            raise DimensionError("row count of A differs from length of b")
        if A.shape[1] > MAX_DIM:
            raise BudgetError(f"dimension {A.shape[1]} exceeds budget {MAX_DIM}")
        norms = np.linalg.norm(A, axis=1)
        zero = norms <= 1e-14
        if np.any(zero & (b < -1e-12)):
            A = np.vstack([A[~zero], np.zeros(A.shape[1])])
            b = np.append(b[~zero], -1.0)
            self._trivially_empty = True
        else:
            A, b = A[~zero], b[~zero]
            self._trivially_empty = False
        nz = np.linalg.norm(A, axis=1)
        nz[nz == 0] = 1.0
        self.A = A / nz[:, None]
        self.b = b / nz
        self.n = A.shape[1]
        self._vrep = vrep
        self._cache: dict = {}
        if vrep is not None and not self._trivially_empty:
            self._verify_vrep(vrep)

    def _verify_vrep(self, vrep: VRep) -> None:
        tol = 1e-7
        scale = 1.0 + (np.abs(vrep.vertices).max() if vrep.vertices.size else 0.0)
        if vrep.vertices.size and np.any(self.A @ vrep.vertices.T - self.b[:, None] > tol * scale):
            raise ValueError("cached V-rep vertices violate the H-rep")
        if vrep.rays.size and np.any(self.A @ vrep.rays.T > tol):
            raise ValueError("cached V-rep rays violate the H-rep")

    # constructors
    @classmethod
    def from_generators(cls, vertices, rays=None, lines=None, n: int | None = None) -> "Polyhedron":
        V = np.asarray(vertices, float)
        if n is None:
            n = V.shape[1] if V.ndim == 2 else V.size
        V = V.reshape(-1, n)
        R = np.zeros((0, n)) if rays is None else np.asarray(rays, float).reshape(-1, n)
        L = np.zeros((0, n)) if lines is None else np.asarray(lines, float).reshape(-1, n)
        if V.shape[0] == 0:
            raise EmptySetError("no points given")
        if R.shape[0]:
            nr = np.linalg.norm(R, axis=1)
            R = R[nr > 1e-14] / nr[nr > 1e-14, None]
        if L.shape[0]:
            L = _orthonormal_rows(L)
        if n == 1:
            return cls._interval_from_generators(V[:, 0], R[:, 0], L.shape[0] > 0)
        V = _dedupe_rows(V, 1e-12)
        R = _dedupe_rows(R, 1e-12) if R.shape[0] else R
        A, b = vrep_to_hrep(V, R, L)
        P = cls(A, b, n)
        P._cache["vrep_raw"] = VRep(V, R, L)
        return P

    @classmethod
    def _interval_from_generators(cls, pts, dirs, has_line) -> "Polyhedron":
        if has_line or (np.any(dirs > 0) and np.any(dirs < 0)):
            return cls(np.zeros((0, 1)), np.zeros(0), 1)
        lo, hi = float(pts.min()), float(pts.max())
        rows, rhs = [], []
        if not np.any(dirs > 0):
            rows.append([1.0])
            rhs.append(hi)
        if not np.any(dirs < 0):
            rows.append([-1.0])
            rhs.append(-lo)
        return cls(np.array(rows).reshape(-1, 1), np.array(rhs), 1)

    @classmethod
    def whole_space(cls, n: int) -> "Polyhedron":
        return cls(np.zeros((0, n)), np.zeros(0), n)

    @classmethod
    def point(cls, p) -> "Polyhedron":
        p = np.asarray(p, float).reshape(-1)
        n = p.size
        return cls(np.vstack([np.eye(n), -np.eye(n)]), np.concatenate([p, -p]), n)

    @classmethod
    def box(cls, lo, hi) -> "Polyhedron":
        lo = np.asarray(lo, float).reshape(-1)
        hi = np.asarray(hi, float).reshape(-1)
        n = lo.size
        rows, rhs = [], []
        for i in range(n):
            if np.isfinite(hi[i]):
                e = np.zeros(n)
                e[i] = 1
                rows.append(e)
                rhs.append(hi[i])
            if np.isfinite(lo[i]):
                e = np.zeros(n)
                e[i] = -1
                rows.append(e)
                rhs.append(-lo[i])
        return cls(np.array(rows).reshape(-1, n), np.array(rhs), n)

    # representations
    @property
    def vrep(self) -> VRep:
        if self._vrep is None:
            if self._trivially_empty:
                self._vrep = VRep(np.zeros((0, self.n)), np.zeros((0, self.n)), np.zeros((0, self.n)))
            elif "vrep_raw" in self._cache:
                self._vrep = hrep_to_vrep(self.A, self.b)
            elif self.n == 1:
                self._vrep = self._interval_vrep()
            else:
                self._vrep = hrep_to_vrep(self.A, self.b)
        return self._vrep

    def _interval_vrep(self) -> VRep:
        a = self.A[:, 0]
        hi = min((self.b[i] / a[i] for i in range(len(a)) if a[i] > 0), default=np.inf)
        lo = max((self.b[i] / a[i] for i in range(len(a)) if a[i] < 0), default=-np.inf)
        z = np.zeros((0, 1))
        if lo > hi + 1e-12:
            return VRep(z, z, z)
        if np.isinf(lo) and np.isinf(hi):
            return VRep(np.zeros((1, 1)), z, np.ones((1, 1)))
        if np.isinf(lo):
            return VRep(np.array([[hi]]), np.array([[-1.0]]), z)
        if np.isinf(hi):
            return VRep(np.array([[lo]]), np.array([[1.0]]), z)
        pts = np.array([[lo]]) if hi - lo <= 1e-15 * (1 + abs(lo)) else np.array([[lo], [hi]])
        return VRep(pts, z, z)

    @property
    def is_empty(self) -> bool:
        return self.vrep.is_empty

    @property
    def is_bounded(self) -> bool:
        v = self.vrep
        return v.rays.shape[0] == 0 and v.lines.shape[0] == 0

    # membership and geometry
    def slacks(self, p) -> np.ndarray:
        p = np.asarray(p, float).reshape(self.n)
        return self.b - self.A @ p

    def contains(self, p, tol: float = DEFAULT_TOL) -> bool:
        p = np.asarray(p, float).reshape(-1)
        if p.size != self.n:
            raise DimensionError("point dimension mismatch")
        if self.is_empty:
            return False
        return bool(np.all(self.slacks(p) >= -tol * (1.0 + np.abs(self.b))))

    def implicit_equalities(self) -> np.ndarray:
        """Indices of rows tight on the whole polyhedron."""
        if "impl" not in self._cache:
            v = self.vrep
            if v.is_empty:
                raise EmptySetError("empty polyhedron")
            tol = 1e-9
            tight = np.ones(self.A.shape[0], dtype=bool)
            if v.vertices.size:
                tight &= np.all(np.abs(self.A @ v.vertices.T - self.b[:, None]) <= tol * (1 + np.abs(self.b[:, None])), axis=1)
            if v.rays.size:
                tight &= np.all(np.abs(self.A @ v.rays.T) <= tol, axis=1)
            self._cache["impl"] = np.flatnonzero(tight)
        return self._cache["impl"]

    def para_basis(self) -> np.ndarray:
        """Orthonormal rows spanning the subspace parallel to the affine hull."""
        if "para" not in self._cache:
            v = self.vrep
            if v.is_empty:
                raise EmptySetError("empty polyhedron")
            gens = [v.vertices[1:] - v.vertices[0]] if v.vertices.shape[0] > 1 else []
            gens += [v.rays, v.lines]
            G = np.vstack([g.reshape(-1, self.n) for g in gens]) if gens else np.zeros((0, self.n))
            self._cache["para"] = _orthonormal_rows(G) if G.size else np.zeros((0, self.n))
        return self._cache["para"]

    @property
    def dim(self) -> int:
        return self.para_basis().shape[0]

    def relative_interior_contains(self, p, tol: float = DEFAULT_TOL) -> bool:
        if self.is_empty:
            raise EmptySetError("relative interior of an empty set")
        p = np.asarray(p, float).reshape(-1)
        if not self.contains(p, tol):
            return False
        impl = set(self.implicit_equalities().tolist())
        s = self.slacks(p)
        if any(abs(s[i]) > tol * (1.0 + abs(self.b[i])) for i in impl):
            return False
        return all(s[i] >= tol for i in range(len(s)) if i not in impl)

    def support(self, u) -> float:
        u = np.asarray(u, float).reshape(self.n)
        v = self.vrep
        if v.is_empty:
            return -np.inf
        if v.rays.size and np.any(v.rays @ u > 1e-12):
            return np.inf
        if v.lines.size and np.any(np.abs(v.lines @ u) > 1e-12):
            return np.inf
        return float(np.max(v.vertices @ u))

    def project(self, p) -> np.ndarray:
        p = np.asarray(p, float).reshape(self.n)
        if self.A.shape[0] == 0:
            return p.copy()
        if self.n == 1:
            v = self.vrep
            if v.is_empty:
                raise EmptySetError("projection onto an empty set")
            lo = -np.inf if (v.lines.size or np.any(v.rays < 0)) else v.vertices.min()
            hi = np.inf if (v.lines.size or np.any(v.rays > 0)) else v.vertices.max()
            return np.array([min(max(p[0], lo), hi)])
        try:
            return quadprog.solve_qp(np.eye(self.n), p, -self.A.T, -self.b, 0)[0]
        except ValueError as exc:
            if self.is_empty:
                raise EmptySetError(f"projection failed: {exc}") from exc
        return self._project_in_hull(p)

    def _project_in_hull(self, p):
        # flat polyhedra trip quadprog on roundoff; solve in affine-hull coordinates instead
        v = self.vrep
        x0 = v.vertices[0] if v.vertices.size else np.zeros(self.n)
        B = self.para_basis()
        if B.shape[0] == 0:
            return x0.copy()
        free = np.setdiff1d(np.arange(self.A.shape[0]), self.implicit_equalities())
        A, b = self.A[free] @ B.T, self.b[free] - self.A[free] @ x0
        keep = np.linalg.norm(A, axis=1) > 1e-12
        A, b = A[keep], np.maximum(b[keep], 0.0)
        q = B @ (p - x0)
        if A.shape[0] == 0:
            return x0 + B.T @ q
        y = quadprog.solve_qp(np.eye(B.shape[0]), q, -A.T, -b, 0)[0]
        return x0 + B.T @ y

    def distance(self, p) -> float:
        p = np.asarray(p, float).reshape(self.n)
        return float(np.linalg.norm(p - self.project(p)))

    # operations
    def translate(self, c) -> "Polyhedron":
        c = np.asarray(c, float).reshape(self.n)
        P = Polyhedron(self.A, self.b + self.A @ c, self.n)
        if self._vrep is not None:
            v = self._vrep
            P._vrep = VRep(v.vertices + c if v.vertices.size else v.vertices, v.rays, v.lines)
        return P

    def intersect(self, other: "Polyhedron") -> "Polyhedron":
        return Polyhedron(np.vstack([self.A, other.A]), np.concatenate([self.b, other.b]), self.n)

    def preimage(self, M, c=None) -> "Polyhedron":
        """{x : M x + c in self}."""
        M = np.atleast_2d(np.asarray(M, float))
        c = np.zeros(M.shape[0]) if c is None else np.asarray(c, float)
        return Polyhedron(self.A @ M, self.b - self.A @ c, M.shape[1])

    def linear_image(self, M) -> "Polyhedron":
        M = np.atleast_2d(np.asarray(M, float))
        v = self.vrep
        if v.is_empty:
            raise EmptySetError("image of an empty set")
        return Polyhedron.from_generators(v.vertices @ M.T, v.rays @ M.T, v.lines @ M.T, n=M.shape[0])

    def minkowski_sum(self, other: "Polyhedron") -> "Polyhedron":
        a, b = self.vrep, other.vrep
        if a.is_empty or b.is_empty:
            raise EmptySetError("Minkowski sum with an empty set")
        V = (a.vertices[:, None, :] + b.vertices[None, :, :]).reshape(-1, self.n)
        return Polyhedron.from_generators(V, np.vstack([a.rays, b.rays]), np.vstack([a.lines, b.lines]), n=self.n)

    def sample(self, k: int, rng: np.random.Generator) -> np.ndarray:
        """Points of P: random convex combinations of vertices plus random ray/line parts."""
        v = self.vrep
        if v.is_empty:
            raise EmptySetError("sampling an empty set")
        W = rng.dirichlet(np.ones(v.vertices.shape[0]), size=k)
        X = W @ v.vertices
        if v.rays.size:
            X = X + rng.exponential(1.0, size=(k, v.rays.shape[0])) @ v.rays
        if v.lines.size:
            X = X + rng.normal(size=(k, v.lines.shape[0])) @ v.lines
        return X

    def equals(self, other: "Polyhedron", tol: float = 1e-7) -> bool:
        return self.contains_set(other, tol) and other.contains_set(self, tol)

    def contains_set(self, other: "Polyhedron", tol: float = 1e-7) -> bool:
        v = other.vrep
        if v.is_empty:
            return True
        if self.is_empty:
            return False
        if not all(self.contains(x, tol) for x in v.vertices):
            return False
        for d in list(v.rays):
            if np.any(self.A @ d > tol):
                return False
        for d in list(v.lines):
            if np.any(np.abs(self.A @ d) > tol):
                return False
        return True

    # faces
    def face_lattice(self, budget: int = FACE_BUDGET):
        """All nonempty faces as (active row indices, affine dimension)."""
        v = self.vrep
        if v.is_empty:
            raise EmptySetError("face lattice of an empty polyhedron")
        tol = 1e-9
        m = self.A.shape[0]
        vt = np.abs(self.A @ v.vertices.T - self.b[:, None]) <= tol * (1 + np.abs(self.b[:, None]))
        rt = np.abs(self.A @ v.rays.T) <= tol if v.rays.size else np.zeros((m, 0), dtype=bool)

        def face_of(active):
            idx = list(active)
            vmask = np.all(vt[idx], axis=0) if idx else np.ones(vt.shape[1], dtype=bool)
            if not vmask.any():
                return None
            rmask = np.all(rt[idx], axis=0) if idx else np.ones(rt.shape[1], dtype=bool)
            closed = np.all(vt[:, vmask], axis=1)
            if rmask.any():
                closed &= np.all(rt[:, rmask], axis=1)
            verts = v.vertices[vmask]
            gens = [verts[1:] - verts[0], v.rays[rmask], v.lines]
            G = np.vstack([g.reshape(-1, self.n) for g in gens])
            dim = int(np.linalg.matrix_rank(G, tol=1e-9)) if G.size else 0
            return frozenset(np.flatnonzero(closed).tolist()), dim

        root = face_of(())
        seen = {root[0]: root[1]}
        queue = [root[0]]
        while queue:
            act = queue.pop()
            for j in range(m):
                if j in act:
                    continue
                res = face_of(act | {j})
                if res is None or res[0] in seen:
                    continue
                seen[res[0]] = res[1]
                queue.append(res[0])
                if len(seen) > budget:
                    raise BudgetError(f"face enumeration exceeded budget {budget}")
        faces = sorted(seen.items(), key=lambda kv: (-kv[1], sorted(kv[0])))
        return [(tuple(sorted(a)), d) for a, d in faces]

    def to_json(self) -> dict:
        return {"A": self.A.tolist(), "b": self.b.tolist(), "n": self.n}

    def __repr__(self) -> str:
        return f"Polyhedron(n={self.n}, rows={self.A.shape[0]})"


class Ball:
    """Closed Euclidean ball; the only non-polyhedral convex piece in the class."""

    def __init__(self, center, radius: float):
        self.center = np.asarray(center, float).reshape(-1)
        self.radius = float(radius)
        self.n = self.center.size

    is_empty = False

    @property
    def dim(self) -> int:
        return self.n if self.radius > 0 else 0

    def para_basis(self) -> np.ndarray:
        return np.eye(self.n) if self.radius > 0 else np.zeros((0, self.n))

    def contains(self, p, tol: float = DEFAULT_TOL) -> bool:
        return bool(np.linalg.norm(np.asarray(p, float) - self.center) <= self.radius + tol)

    def relative_interior_contains(self, p, tol: float = DEFAULT_TOL) -> bool:
        d = np.linalg.norm(np.asarray(p, float) - self.center)
        if self.radius == 0:
            return bool(d <= tol)
        return bool(d <= self.radius - tol)

    def support(self, u) -> float:
        u = np.asarray(u, float)
        return float(self.center @ u + self.radius * np.linalg.norm(u))

    def project(self, p) -> np.ndarray:
        p = np.asarray(p, float)
        d = p - self.center
        nd = np.linalg.norm(d)
        return p.copy() if nd <= self.radius else self.center + d * (self.radius / nd)

    def distance(self, p) -> float:
        return float(max(0.0, np.linalg.norm(np.asarray(p, float) - self.center) - self.radius))

    def translate(self, c) -> "Ball":
        return Ball(self.center + np.asarray(c, float), self.radius)

    def sample(self, k: int, rng: np.random.Generator) -> np.ndarray:
        d = rng.normal(size=(k, self.n))
        d /= np.linalg.norm(d, axis=1)[:, None]
        r = self.radius * rng.uniform(size=(k, 1)) ** (1.0 / self.n)
        return self.center + d * r

    def to_json(self) -> dict:
        return {"ball": {"center": self.center.tolist(), "radius": self.radius}}


def minkowski(a, b):
    """Minkowski sum of two convex pieces (Polyhedron or Ball)."""
    if isinstance(a, Polyhedron) and isinstance(b, Polyhedron):
        return a.minkowski_sum(b)
    if isinstance(a, Polyhedron):
        a, b = b, a
    if isinstance(b, Ball):
        return Ball(a.center + b.center, a.radius + b.radius)
    v = b.vrep
    if v.vertices.shape[0] == 1 and not v.rays.size and not v.lines.size:
        return a.translate(v.vertices[0])
    raise NotExactError("Minkowski sum of a ball and a non-singleton polyhedron is outside the class")


def singleton(p) -> Polyhedron:
    p = np.asarray(p, float).reshape(-1)
    return Polyhedron.from_generators(p[None, :], n=p.size)


class ConeRep:
    """Closed polyhedral cone, by generators (rays + lineality) and/or H-rep {u : H u <= 0}."""

    def __init__(self, n: int, rays=None, lineality=None, H=None):
        self.n = int(n)
        self._rays = None if rays is None else np.asarray(rays, float).reshape(-1, self.n)
        self._lin = None if lineality is None else np.asarray(lineality, float).reshape(-1, self.n)
        self._H = None if H is None else np.asarray(H, float).reshape(-1, self.n)
        if self._rays is None and self._H is None:
            self._rays = np.zeros((0, self.n))
            self._lin = np.zeros((0, self.n))
        if self._rays is not None and self._lin is None:
            self._lin = np.zeros((0, self.n))

    @classmethod
    def from_hrep(cls, H, n: int | None = None) -> "ConeRep":
        H = np.asarray(H, float)
        if n is None:
            n = H.shape[1]
        return cls(n, H=H.reshape(-1, n))

    @classmethod
    def trivial(cls, n: int) -> "ConeRep":
        return cls(n, rays=np.zeros((0, n)), lineality=np.zeros((0, n)))

    @classmethod
    def whole(cls, n: int) -> "ConeRep":
        return cls(n, rays=np.zeros((0, n)), lineality=np.eye(n))

    def _generate(self):
        if self._rays is None:
            rays, lin = cone_dd(self._H)
            self._rays, self._lin = rays, _orthonormal_rows(lin) if lin.size else lin

    @property
    def rays(self) -> np.ndarray:
        self._generate()
        return self._rays

    @property
    def lineality(self) -> np.ndarray:
        self._generate()
        return self._lin

    @property
    def H(self) -> np.ndarray:
        if self._H is None:
            R, L = self.rays, self.lineality
            if R.shape[0] == 0 and L.shape[0] == 0:
                self._H = np.vstack([np.eye(self.n), -np.eye(self.n)])
            else:
                A, _ = vrep_to_hrep(np.zeros((1, self.n)), R, L)
                self._H = A
        return self._H

    def contains(self, u, tol: float = DEFAULT_TOL) -> bool:
        u = np.asarray(u, float).reshape(self.n)
        H = self.H
        return bool(np.all(H @ u <= tol * (1 + np.linalg.norm(u))))

    def is_trivial(self) -> bool:
        return self.rays.shape[0] == 0 and self.lineality.shape[0] == 0

    @property
    def dim(self) -> int:
        G = np.vstack([self.rays, self.lineality])
        return int(np.linalg.matrix_rank(G, tol=1e-9)) if G.size else 0

    def equals(self, other: "ConeRep", tol: float = 1e-7) -> bool:
        return self.contains_cone(other, tol) and other.contains_cone(self, tol)

    def contains_cone(self, other: "ConeRep", tol: float = 1e-7) -> bool:
        return all(self.contains(r, tol) for r in other.rays) and all(
            self.contains(l, tol) and self.contains(-l, tol) for l in other.lineality)

    def as_polyhedron(self) -> Polyhedron:
        return Polyhedron(self.H, np.zeros(self.H.shape[0]), self.n)

    def polar(self) -> "ConeRep":
        return ConeRep(self.n, H=np.vstack([self.rays, self.lineality, -self.lineality]))

    def unit_samples(self, k: int, rng: np.random.Generator) -> np.ndarray:
        """Extreme rays, ± lineality directions and k random unit vectors of the cone."""
        R, L = self.rays, self.lineality
        out = [r for r in R] + [l for l in L] + [-l for l in L]
        if R.shape[0] + L.shape[0] > 1:
            for _ in range(k):
                u = np.zeros(self.n)
                if R.shape[0]:
                    u += rng.exponential(size=R.shape[0]) @ R
                if L.shape[0]:
                    u += rng.normal(size=L.shape[0]) @ L
                nu = np.linalg.norm(u)
                if nu > 1e-12:
                    out.append(u / nu)
        return np.array(out).reshape(-1, self.n)

    def to_json(self) -> dict:
        return {"rays": self.rays.tolist(), "lineality": self.lineality.tolist()}

    def __repr__(self) -> str:
        return f"ConeRep(n={self.n}, rays={self.rays.shape[0]}, lineality={self.lineality.shape[0]})"


def cone_intersection_trivial(K1: ConeRep, M, K2: ConeRep) -> bool:
    """Is {μ ∈ K1 : M μ ∈ K2} = {0}?"""
    M = np.atleast_2d(np.asarray(M, float))
    H = np.vstack([K1.H, K2.H @ M])
    return ConeRep(K1.n, H=H).is_trivial()


def subspace_intersection_trivial(B1, M, B2, tol: float = 1e-9) -> bool:
    """Is {μ ∈ span B1 : M μ ∈ span B2} = {0}?  Bases are given as rows."""
    B1 = np.asarray(B1, float)
    if B1.size == 0:
        return True
    M = np.atleast_2d(np.asarray(M, float))
    B2 = np.asarray(B2, float).reshape(-1, M.shape[0])
    K = np.hstack([(M @ B1.T), -B2.T]) if B2.size else M @ B1.T
    N = null_space(K, tol)
    if N.size == 0:
        return True
    mus = N[:, : B1.shape[0]] @ B1
    return bool(np.linalg.matrix_rank(mus, tol=tol) == 0) if mus.size else True


def lp_feasible_point(A, b, n: int):
    """A point of {Ax <= b} or None (HiGHS)."""
    from scipy.optimize import linprog

    A = np.asarray(A, float).reshape(-1, n)
    if A.shape[0] == 0:
        return np.zeros(n)
    res = linprog(np.zeros(n), A_ub=A, b_ub=np.asarray(b, float), bounds=[(None, None)] * n, method="highs")
    return res.x if res.status == 0 else None


def all_subsets(items, max_size: int):
    for k in range(0, max_size + 1):
        yield from itertools.combinations(items, k)
