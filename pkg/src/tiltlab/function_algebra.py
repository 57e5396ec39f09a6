"""The structured function class, its JSON form, and the manifold specs.

Values are extended reals: a Python float where +inf (``math.inf``) is the
only non-finite value that may appear, never a large sentinel.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence, Union

import numpy as np

from .errors import DimensionError, EmptySetError, ParseError
from .polyhedra import MAX_DIM, Polyhedron, lp_feasible_point, null_space
from .polynomials import Poly, SmoothMap, smooth_jet

__all__ = [
    "PLUS_INF", "ExtReal", "as_point", "FunctionExpr", "Polynomial", "MaxOfSmooth", "MinOfSmooth",
    "NormL1", "NormL2", "NormLinf", "Indicator", "Sum", "Tilted", "SquaredComposite", "Precomposed",
    "evaluate", "tilt", "shift", "face_lattice", "relative_interior_contains", "smooth_jet",
    "AffineFace", "SmoothZeroSet", "parse_function", "function_to_json", "Poly", "SmoothMap", "Polyhedron",
]

PLUS_INF = math.inf
ExtReal = float
EVAL_FEAS_TOL = 1e-12


def as_point(x, n: int | None = None) -> np.ndarray:
    x = np.atleast_1d(np.asarray(x, float)).reshape(-1)
    if n is not None and x.size != n:
        raise DimensionError(f"expected a point in R^{n}, got {x.size} coordinates")
    if not np.all(np.isfinite(x)):
        raise ValueError("point coordinates must be finite")
    return x


class FunctionExpr:
    n: int

    def evaluate(self, x) -> ExtReal:
        return float(self.evaluate_many(as_point(x, self.n)[None, :])[0])

    def evaluate_many(self, X) -> np.ndarray:
        raise NotImplementedError

    def _X(self, X) -> np.ndarray:
        X = np.asarray(X, float)
        if X.ndim == 1:
            X = X.reshape(-1, self.n) if self.n == 1 else X.reshape(1, -1)
        if X.shape[1] != self.n:
            raise DimensionError(f"points in R^{X.shape[1]} for a function on R^{self.n}")
        return X

    @property
    def is_convex(self) -> bool:
        return False

    @property
    def is_lipschitz(self) -> bool:
        """Finite-valued everywhere (hence locally Lipschitz for this class)."""
        return True

    def to_json(self) -> dict:
        raise NotImplementedError

    def __add__(self, other: "FunctionExpr") -> "Sum":
        return Sum((self, other))


def _check_dim(n: int) -> int:
    n = int(n)
    if n < 1:
        raise DimensionError("dimension must be positive")
    if n > MAX_DIM:
        from .errors import BudgetError

        raise BudgetError(f"dimension {n} exceeds budget {MAX_DIM}")
    return n


@dataclass(frozen=True, eq=False)
class Polynomial(FunctionExpr):
    p: Poly

    @property
    def n(self) -> int:
        return self.p.n

    def evaluate_many(self, X):
        return self.p.eval_many(self._X(X))

    @property
    def is_convex(self) -> bool:
        if self.p.degree <= 1:
            return True
        if self.p.degree == 2:
            H = self.p.hess(np.zeros(self.n))
            return bool(np.linalg.eigvalsh(H).min() >= -1e-12)
        return False

    def to_json(self):
        return self.p.to_json()


@dataclass(frozen=True, eq=False)
class MaxOfSmooth(FunctionExpr):
    pieces: tuple

    def __post_init__(self):
        if not self.pieces:
            raise ValueError("max of an empty family")
        if len({p.n for p in self.pieces}) != 1:
            raise DimensionError("pieces disagree on dimension")

    @property
    def n(self) -> int:
        return self.pieces[0].n

    def evaluate_many(self, X):
        X = self._X(X)
        return np.max(np.stack([p.eval_many(X) for p in self.pieces]), axis=0)

    @property
    def is_convex(self) -> bool:
        return all(Polynomial(p).is_convex for p in self.pieces)

    def to_json(self):
        return {"kind": "max_of_smooth", "n": self.n, "pieces": [p.to_json() for p in self.pieces]}


@dataclass(frozen=True, eq=False)
class MinOfSmooth(FunctionExpr):
    pieces: tuple

    def __post_init__(self):
        if not self.pieces:
            raise ValueError("min of an empty family")
        if len({p.n for p in self.pieces}) != 1:
            raise DimensionError("pieces disagree on dimension")

    @property
    def n(self) -> int:
        return self.pieces[0].n

    def evaluate_many(self, X):
        X = self._X(X)
        return np.min(np.stack([p.eval_many(X) for p in self.pieces]), axis=0)

    @property
    def is_convex(self) -> bool:
        return len(self.pieces) == 1 and Polynomial(self.pieces[0]).is_convex

    def to_json(self):
        return {"kind": "min_of_smooth", "n": self.n, "pieces": [p.to_json() for p in self.pieces]}


@dataclass(frozen=True, eq=False)
class NormL1(FunctionExpr):
    n: int

    def __post_init__(self):
        _check_dim(self.n)

    def evaluate_many(self, X):
        return np.abs(self._X(X)).sum(axis=1)

    is_convex = True

    def to_json(self):
        return {"kind": "norm_l1", "n": self.n}


@dataclass(frozen=True, eq=False)
class NormL2(FunctionExpr):
    n: int

    def __post_init__(self):
        _check_dim(self.n)

    def evaluate_many(self, X):
        return np.linalg.norm(self._X(X), axis=1)

    is_convex = True

    def to_json(self):
        return {"kind": "norm_l2", "n": self.n}


@dataclass(frozen=True, eq=False)
class NormLinf(FunctionExpr):
    n: int

    def __post_init__(self):
        _check_dim(self.n)

    def evaluate_many(self, X):
        return np.abs(self._X(X)).max(axis=1)

    is_convex = True

    def to_json(self):
        return {"kind": "norm_linf", "n": self.n}


@dataclass(frozen=True, eq=False)
class Indicator(FunctionExpr):
    P: Polyhedron

    def __post_init__(self):
        if self.P.is_empty:
            raise EmptySetError("indicator of an empty polyhedron is not proper")

    @property
    def n(self) -> int:
        return self.P.n

    def evaluate_many(self, X):
        X = self._X(X)
        if self.P.A.shape[0] == 0:
            return np.zeros(X.shape[0])
        viol = X @ self.P.A.T - self.P.b[None, :]
        ok = np.all(viol <= EVAL_FEAS_TOL * (1.0 + np.abs(self.P.b))[None, :], axis=1)
        return np.where(ok, 0.0, np.inf)

    is_convex = True

    @property
    def is_lipschitz(self) -> bool:
        return self.P.A.shape[0] == 0

    def to_json(self):
        return {"kind": "indicator", "n": self.n, "A": self.P.A.tolist(), "b": self.P.b.tolist()}


@dataclass(frozen=True, eq=False)
class Sum(FunctionExpr):
    terms: tuple

    def __post_init__(self):
        if not self.terms:
            raise ValueError("empty sum")
        if len({t.n for t in self.terms}) != 1:
            raise DimensionError("summands disagree on dimension")
        self._check_proper()

    def _check_proper(self):
        rows, rhs = [], []
        for t in _flatten(self):
            if isinstance(t, Indicator):
                rows.append(t.P.A)
                rhs.append(t.P.b)
        if len(rows) > 1 and lp_feasible_point(np.vstack(rows), np.concatenate(rhs), self.n) is None:
            raise EmptySetError("sum of indicators has empty domain")

    @property
    def n(self) -> int:
        return self.terms[0].n

    def evaluate_many(self, X):
        X = self._X(X)
        out = np.zeros(X.shape[0])
        for t in self.terms:
            out = out + t.evaluate_many(X)
        return out

    @property
    def is_convex(self) -> bool:
        return all(t.is_convex for t in self.terms)

    @property
    def is_lipschitz(self) -> bool:
        return all(t.is_lipschitz for t in self.terms)

    def to_json(self):
        return {"kind": "sum", "terms": [t.to_json() for t in self.terms]}


def _flatten(f: FunctionExpr):
    if isinstance(f, Sum):
        for t in f.terms:
            yield from _flatten(t)
    else:
        yield f


@dataclass(frozen=True, eq=False)
class Tilted(FunctionExpr):
    base: FunctionExpr
    v: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "v", as_point(self.v, self.base.n))

    @property
    def n(self) -> int:
        return self.base.n

    def evaluate_many(self, X):
        X = self._X(X)
        return self.base.evaluate_many(X) - X @ self.v

    @property
    def is_convex(self) -> bool:
        return self.base.is_convex

    @property
    def is_lipschitz(self) -> bool:
        return self.base.is_lipschitz

    def to_json(self):
        return {"kind": "tilted", "base": self.base.to_json(), "v": self.v.tolist()}


@dataclass(frozen=True, eq=False)
class SquaredComposite(FunctionExpr):
    inner: FunctionExpr

    def __post_init__(self):
        if not self.inner.is_lipschitz:
            raise ValueError("squared composite needs a finite-valued inner function")

    @property
    def n(self) -> int:
        return self.inner.n

    def evaluate_many(self, X):
        return self.inner.evaluate_many(self._X(X)) ** 2

    @property
    def is_convex(self) -> bool:
        if isinstance(self.inner, (NormL1, NormL2, NormLinf)):
            return True
        # a gauge: maximum of linear forms closed under negation
        if isinstance(self.inner, MaxOfSmooth) and all(p.degree <= 1 for p in self.inner.pieces):
            parts = [p.affine_parts() for p in self.inner.pieces]
            if any(abs(c) > 0 for _, c in parts):
                return False
            A = np.array([a for a, _ in parts])
            return all(np.min(np.linalg.norm(A + a, axis=1)) <= 1e-12 for a in A)
        return False

    def to_json(self):
        return {"kind": "squared", "inner": self.inner.to_json()}


@dataclass(frozen=True, eq=False)
class Precomposed(FunctionExpr):
    """x ↦ h(G(x) + y)."""

    h: FunctionExpr
    G: SmoothMap
    y: np.ndarray = field(default=None)

    def __post_init__(self):
        if self.G.m != self.h.n:
            raise DimensionError("map codomain does not match the outer function")
        y = np.zeros(self.G.m) if self.y is None else self.y
        object.__setattr__(self, "y", as_point(y, self.G.m))

    @property
    def n(self) -> int:
        return self.G.n

    def evaluate_many(self, X):
        X = self._X(X)
        return self.h.evaluate_many(self.G.value_many(X) + self.y[None, :])

    @property
    def is_convex(self) -> bool:
        return self.h.is_convex and self.G.is_affine

    @property
    def is_lipschitz(self) -> bool:
        return self.h.is_lipschitz

    def to_json(self):
        return {"kind": "precomposed", "h": self.h.to_json(), "G": self.G.to_json(), "y": self.y.tolist()}


# public operations

def evaluate(f: FunctionExpr, x) -> ExtReal:
    return f.evaluate(as_point(x, f.n))


def tilt(f: FunctionExpr, v) -> Tilted:
    return Tilted(f, as_point(v, f.n))


def shift(h: FunctionExpr, G: SmoothMap, y) -> Precomposed:
    return Precomposed(h, G, as_point(y, G.m))


def face_lattice(P: Polyhedron, budget: int = 100_000):
    """(active set, manifold, dimension) for every nonempty face, largest first."""
    out = []
    for active, dim in P.face_lattice(budget):
        out.append((active, AffineFace(P, active), dim))
    return out


def relative_interior_contains(S, p, tol: float = 1e-9) -> bool:
    return S.relative_interior_contains(as_point(p, S.n), tol)


# manifolds

class ManifoldSpec:
    n: int

    def equations(self) -> list:
        """Polynomials whose common zero set is the manifold near its base."""
        raise NotImplementedError

    def residual(self, x) -> float:
        x = as_point(x, self.n)
        eqs = self.equations()
        return float(max((abs(e(x)) for e in eqs), default=0.0))

    def contains(self, x, tol: float = 1e-8) -> bool:
        return self.residual(x) <= tol

    def normal_basis(self, x) -> np.ndarray:
        eqs = self.equations()
        if not eqs:
            return np.zeros((0, self.n))
        J = np.array([e.grad(as_point(x, self.n)) for e in eqs])
        from .polyhedra import _orthonormal_rows

        return _orthonormal_rows(J, 1e-9)

    def tangent_basis(self, x) -> np.ndarray:
        N = self.normal_basis(x)
        return null_space(N) if N.size else np.eye(self.n)

    def project(self, x) -> np.ndarray:
        raise NotImplementedError

    @property
    def is_affine(self) -> bool:
        return all(e.degree <= 1 for e in self.equations())


class AffineFace(ManifoldSpec):
    """Relatively open face of P picked by its tight rows, viewed through its affine hull."""

    def __init__(self, P: Polyhedron, active: Sequence[int]):
        self.P = P
        self.n = P.n
        self.active = tuple(sorted(int(i) for i in active))
        rows = P.A[list(self.active)] if self.active else np.zeros((0, self.n))
        self._rows = rows
        self._rhs = P.b[list(self.active)] if self.active else np.zeros(0)
        r = int(np.linalg.matrix_rank(rows, tol=1e-9)) if rows.size else 0
        self.dim = self.n - r

    @classmethod
    def whole_space(cls, n: int) -> "AffineFace":
        return cls(Polyhedron.whole_space(n), ())

    @classmethod
    def from_equations(cls, A, b) -> "AffineFace":
        A = np.atleast_2d(np.asarray(A, float))
        b = np.asarray(b, float).reshape(-1)
        P = Polyhedron(np.vstack([A, -A]), np.concatenate([b, -b]), A.shape[1])
        return cls(P, range(A.shape[0]))

    def equations(self):
        return [Poly.linear(a, -c) for a, c in zip(self._rows, self._rhs)]

    def project(self, x):
        x = as_point(x, self.n)
        if not self.active:
            return x.copy()
        M, b = self._rows, self._rhs
        return x - np.linalg.pinv(M) @ (M @ x - b)

    def to_json(self):
        return {"kind": "affine_face", "A": self._rows.tolist(), "b": self._rhs.tolist(), "dim": self.dim, "n": self.n}

    def __repr__(self):
        return f"AffineFace(n={self.n}, dim={self.dim}, rows={self._rows.tolist()}, rhs={self._rhs.tolist()})"


class SmoothZeroSet(ManifoldSpec):
    def __init__(self, F: SmoothMap, base, rank_tol: float = 1e-8):
        self.F = F
        self.n = F.n
        self.base = as_point(base, F.n)
        J = F.jacobian(self.base) if F.m else np.zeros((0, F.n))
        r = int(np.linalg.matrix_rank(J, tol=rank_tol)) if J.size else 0
        if r != F.m:
            raise ValueError("Jacobian of the defining map lacks full row rank at the base point")
        self.dim = self.n - r

    def equations(self):
        return list(self.F.components)

    def project(self, x, iters: int = 30):
        """Gauss-Newton projection onto {F = 0} started at x."""
        z = as_point(x, self.n).copy()
        for _ in range(iters):
            r = self.F.value(z)
            if np.max(np.abs(r), initial=0.0) <= 1e-15:
                break
            z = z - np.linalg.pinv(self.F.jacobian(z)) @ r
        return z

    def to_json(self):
        return {"kind": "smooth_zero_set", "F": self.F.to_json(), "base": self.base.tolist(), "dim": self.dim}

    def __repr__(self):
        return f"SmoothZeroSet(n={self.n}, dim={self.dim})"


def manifold_from_json(doc: dict) -> ManifoldSpec:
    if doc["kind"] == "affine_face":
        A = np.asarray(doc["A"], float).reshape(-1, int(doc["n"]))
        if A.shape[0] == 0:
            return AffineFace.whole_space(int(doc["n"]))
        return AffineFace.from_equations(A, doc["b"])
    if doc["kind"] == "smooth_zero_set":
        return SmoothZeroSet(SmoothMap.from_json(doc["F"]), doc["base"])
    raise ParseError(f"unknown manifold kind {doc['kind']!r}")


# JSON

def _poly(doc, n, path):
    if not isinstance(doc, dict) or "terms" not in doc:
        raise ParseError(f"{path}: polynomial needs a 'terms' list")
    try:
        return Poly.from_json(doc, n)
    except (KeyError, TypeError) as exc:
        raise ParseError(f"{path}: malformed polynomial ({exc})") from exc


def parse_function(doc: dict, n: int | None = None, path: str = "") -> FunctionExpr:
    """Build a FunctionExpr from its JSON form; anything outside the class is rejected."""
    if not isinstance(doc, dict) or "kind" not in doc:
        raise ParseError(f"{path or '/'}: expected an object with a 'kind'")
    kind = doc["kind"]
    n = doc.get("n", n)
    try:
        if kind == "polynomial":
            return Polynomial(_poly(doc, n, path))
        if kind in ("max_of_smooth", "min_of_smooth"):
            pieces = tuple(_poly(p, n, f"{path}/pieces/{i}") for i, p in enumerate(doc["pieces"]))
            return (MaxOfSmooth if kind == "max_of_smooth" else MinOfSmooth)(pieces)
        if kind == "norm_l1":
            return NormL1(int(n))
        if kind == "norm_l2":
            return NormL2(int(n))
        if kind == "norm_linf":
            return NormLinf(int(n))
        if kind == "indicator":
            A = np.asarray(doc["A"], float)
            dim = int(n) if n is not None else A.shape[1]
            return Indicator(Polyhedron(A.reshape(-1, dim), doc["b"], dim))
        if kind == "sum":
            terms = tuple(parse_function(t, n, f"{path}/terms/{i}") for i, t in enumerate(doc["terms"]))
            return Sum(terms)
        if kind == "tilted":
            base = parse_function(doc["base"], n, f"{path}/base")
            return Tilted(base, as_point(doc["v"], base.n))
        if kind == "squared":
            return SquaredComposite(parse_function(doc["inner"], n, f"{path}/inner"))
        if kind == "precomposed":
            G = SmoothMap.from_json(doc["G"])
            h = parse_function(doc["h"], G.m, f"{path}/h")
            return Precomposed(h, G, doc.get("y"))
    except KeyError as exc:
        raise ParseError(f"{path or '/'}: missing field {exc}") from exc
    except (DimensionError, EmptySetError) as exc:
        raise ParseError(f"{path or '/'}: {exc}") from exc
    raise ParseError(f"{path or '/'}: unsupported kind {kind!r}")


def function_to_json(f: FunctionExpr) -> dict:
    return f.to_json()
