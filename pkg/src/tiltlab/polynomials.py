"""Sparse multivariate polynomials and polynomial maps G: R^n -> R^m."""
from __future__ import annotations

from typing import Iterable, Sequence

import numpy as np

from .errors import DimensionError


def _stack(polys: Sequence["Poly"]):
    """Union monomial table and coefficient matrix for joint evaluation."""
    index: dict[tuple, int] = {}
    for p in polys:
        for e, _ in p.terms:
            index.setdefault(e, len(index))
    n = polys[0].n if polys else 0
    E = np.array(list(index), dtype=np.int64).reshape(len(index), n)
    C = np.zeros((len(index), len(polys)))
    for j, p in enumerate(polys):
        for e, c in p.terms:
            C[index[e], j] = c
    return E, C


def _monomials(E: np.ndarray, X: np.ndarray) -> np.ndarray:
    if E.shape[0] == 0:
        return np.zeros((X.shape[0], 0))
    if E.shape[1] == 0:
        return np.ones((X.shape[0], E.shape[0]))
    return np.prod(X[:, None, :] ** E[None, :, :], axis=2)


class Poly:
    """Polynomial in ``n`` variables stored as a canonical tuple of (exponents, coeff)."""

    def __init__(self, n: int, terms=None):
        self.n = int(n)
        acc: dict[tuple, float] = {}
        items = terms.items() if isinstance(terms, dict) else (terms or ())
        for e, c in items:
            e = tuple(int(k) for k in e)
            if len(e) != self.n:
                raise DimensionError(f"monomial {e} does not have {self.n} exponents")
            if any(k < 0 for k in e):
                raise ValueError(f"negative exponent in {e}")
            acc[e] = acc.get(e, 0.0) + float(c)
        self.terms = tuple(sorted((e, c) for e, c in acc.items() if c != 0.0))
        self._cache: dict = {}

    # construction helpers
    @classmethod
    def constant(cls, n: int, c: float) -> "Poly":
        return cls(n, {(0,) * n: c})

    @classmethod
    def variable(cls, n: int, i: int) -> "Poly":
        e = [0] * n
        e[i] = 1
        return cls(n, {tuple(e): 1.0})

    @classmethod
    def linear(cls, a: Iterable[float], c: float = 0.0) -> "Poly":
        a = [float(t) for t in a]
        n = len(a)
        terms = {(0,) * n: c}
        for i, ai in enumerate(a):
            e = [0] * n
            e[i] = 1
            terms[tuple(e)] = terms.get(tuple(e), 0.0) + ai
        return cls(n, terms)

    @classmethod
    def quadratic(cls, Q, g=None, c: float = 0.0) -> "Poly":
        """The polynomial 0.5 x'Qx + g'x + c."""
        Q = np.atleast_2d(np.asarray(Q, float))
        n = Q.shape[0]
        g = np.zeros(n) if g is None else np.asarray(g, float)
        terms: dict[tuple, float] = {(0,) * n: c}
        for i in range(n):
            e = [0] * n
            e[i] = 1
            terms[tuple(e)] = terms.get(tuple(e), 0.0) + g[i]
            for j in range(n):
                e = [0] * n
                e[i] += 1
                e[j] += 1
                terms[tuple(e)] = terms.get(tuple(e), 0.0) + 0.5 * Q[i, j]
        return cls(n, terms)

    # structure
    def __eq__(self, other) -> bool:
        return isinstance(other, Poly) and self.n == other.n and self.terms == other.terms

    def __hash__(self) -> int:
        return hash((self.n, self.terms))

    def __repr__(self) -> str:
        if not self.terms:
            return f"Poly(n={self.n}, 0)"
        parts = []
        for e, c in self.terms:
            mono = "*".join(f"x{i}^{k}" if k > 1 else f"x{i}" for i, k in enumerate(e) if k)
            parts.append(f"{c:g}" + (f"*{mono}" if mono else ""))
        return f"Poly(n={self.n}, " + " + ".join(parts) + ")"

    @property
    def degree(self) -> int:
        return max((sum(e) for e, _ in self.terms), default=0)

    def is_zero(self, tol: float = 0.0) -> bool:
        return all(abs(c) <= tol for _, c in self.terms)

    def coeff(self, e: Sequence[int]) -> float:
        e = tuple(e)
        for ee, c in self.terms:
            if ee == e:
                return c
        return 0.0

    def affine_parts(self):
        """(a, c) with p(x) = a.x + c; raises if the degree exceeds one."""
        if self.degree > 1:
            raise ValueError("polynomial is not affine")
        a = np.zeros(self.n)
        c = 0.0
        for e, v in self.terms:
            if sum(e) == 0:
                c = v
            else:
                a[e.index(1)] = v
        return a, c

    # arithmetic
    def _binary(self, other, sign: float) -> "Poly":
        if not isinstance(other, Poly):
            other = Poly.constant(self.n, float(other))
        if other.n != self.n:
            raise DimensionError("polynomial dimension mismatch")
        acc = dict(self.terms)
        for e, c in other.terms:
            acc[e] = acc.get(e, 0.0) + sign * c
        return Poly(self.n, acc)

    def __add__(self, other) -> "Poly":
        return self._binary(other, 1.0)

    __radd__ = __add__

    def __sub__(self, other) -> "Poly":
        return self._binary(other, -1.0)

    def __rsub__(self, other) -> "Poly":
        return (-self)._binary(other, 1.0)

    def __neg__(self) -> "Poly":
        return Poly(self.n, [(e, -c) for e, c in self.terms])

    def __mul__(self, other) -> "Poly":
        if not isinstance(other, Poly):
            return Poly(self.n, [(e, c * float(other)) for e, c in self.terms])
        if other.n != self.n:
            raise DimensionError("polynomial dimension mismatch")
        acc: dict[tuple, float] = {}
        for e1, c1 in self.terms:
            for e2, c2 in other.terms:
                e = tuple(a + b for a, b in zip(e1, e2))
                acc[e] = acc.get(e, 0.0) + c1 * c2
        return Poly(self.n, acc)

    __rmul__ = __mul__

    def __pow__(self, k: int) -> "Poly":
        k = int(k)
        if k < 0:
            raise ValueError("negative power")
        out = Poly.constant(self.n, 1.0)
        base = self
        while k:
            if k & 1:
                out = out * base
            base = base * base
            k >>= 1
        return out

    def compose(self, maps: Sequence["Poly"]) -> "Poly":
        """Substitute x_i := maps[i]; the result lives in maps[0].n variables."""
        if len(maps) != self.n:
            raise DimensionError("composition needs one polynomial per variable")
        m = maps[0].n if maps else 0
        powers: dict[tuple, Poly] = {}

        def power(i, k):
            if (i, k) not in powers:
                powers[(i, k)] = maps[i] ** k
            return powers[(i, k)]

        out = Poly(m)
        for e, c in self.terms:
            term = Poly.constant(m, c)
            for i, k in enumerate(e):
                if k:
                    term = term * power(i, k)
            out = out + term
        return out

    def partial(self, i: int) -> "Poly":
        key = ("d", i)
        if key not in self._cache:
            acc = {}
            for e, c in self.terms:
                if e[i]:
                    ee = list(e)
                    ee[i] -= 1
                    acc[tuple(ee)] = acc.get(tuple(ee), 0.0) + c * e[i]
            self._cache[key] = Poly(self.n, acc)
        return self._cache[key]

    # evaluation
    def _compiled(self, what: str):
        key = ("c", what)
        if key not in self._cache:
            if what == "value":
                polys = [self]
            elif what == "grad":
                polys = [self.partial(i) for i in range(self.n)]
            else:
                polys = [self.partial(i).partial(j) for i in range(self.n) for j in range(self.n)]
            self._cache[key] = _stack(polys)
        return self._cache[key]

    def eval_many(self, X) -> np.ndarray:
        X = np.asarray(X, float).reshape(-1, self.n)
        E, C = self._compiled("value")
        return (_monomials(E, X) @ C)[:, 0] if C.size else np.zeros(X.shape[0])

    def __call__(self, x) -> float:
        return float(self.eval_many(np.asarray(x, float).reshape(1, self.n))[0])

    def grad_many(self, X) -> np.ndarray:
        X = np.asarray(X, float).reshape(-1, self.n)
        E, C = self._compiled("grad")
        if C.size == 0:
            return np.zeros((X.shape[0], self.n))
        return _monomials(E, X) @ C

    def grad(self, x) -> np.ndarray:
        return self.grad_many(np.asarray(x, float).reshape(1, self.n))[0]

    def hess_many(self, X) -> np.ndarray:
        X = np.asarray(X, float).reshape(-1, self.n)
        E, C = self._compiled("hess")
        if C.size == 0:
            return np.zeros((X.shape[0], self.n, self.n))
        return (_monomials(E, X) @ C).reshape(-1, self.n, self.n)

    def hess(self, x) -> np.ndarray:
        return self.hess_many(np.asarray(x, float).reshape(1, self.n))[0]

    # univariate helpers
    def univariate_coeffs(self) -> np.ndarray:
        """Coefficients, highest degree first (numpy.roots order); n must be 1."""
        if self.n != 1:
            raise DimensionError("univariate coefficients need n = 1")
        d = self.degree
        out = np.zeros(d + 1)
        for (k,), c in self.terms:
            out[d - k] += c
        return out

    def restrict_line(self, x0, d) -> "Poly":
        """t -> p(x0 + t d) as a univariate polynomial."""
        x0 = np.asarray(x0, float)
        d = np.asarray(d, float)
        maps = [Poly(1, {(0,): x0[i], (1,): d[i]}) for i in range(self.n)]
        return self.compose(maps)

    # serialization
    def to_json(self) -> dict:
        return {
            "kind": "polynomial",
            "n": self.n,
            "terms": [{"exponents": list(e), "coeff": c} for e, c in self.terms],
        }

    @classmethod
    def from_json(cls, doc: dict, n: int | None = None) -> "Poly":
        terms = doc.get("terms", [])
        dim = doc.get("n", n)
        if dim is None:
            if not terms:
                raise DimensionError("empty polynomial needs an explicit n")
            dim = len(terms[0]["exponents"])
        return cls(dim, [(t["exponents"], t["coeff"]) for t in terms])


def real_roots(p: Poly, imag_tol: float = 1e-7) -> np.ndarray:
    """Real roots of a univariate polynomial via the companion matrix, Newton-polished.

    Returns None when p is identically zero.
    """
    coeffs = np.trim_zeros(p.univariate_coeffs(), "f")
    if coeffs.size == 0:
        return None
    if coeffs.size == 1:
        return np.zeros(0)
    roots = np.roots(coeffs)
    scale = 1.0 + np.abs(roots)
    real = np.sort(roots[np.abs(roots.imag) <= imag_tol * scale].real)
    dp = np.polyder(coeffs)
    for _ in range(3):
        f = np.polyval(coeffs, real)
        g = np.polyval(dp, real)
        step = np.where(np.abs(g) > 1e-300, f / np.where(g == 0, 1.0, g), 0.0)
        cand = real - step
        better = np.abs(np.polyval(coeffs, cand)) <= np.abs(f)
        real = np.where(better, cand, real)
    return np.sort(real)


class SmoothMap:
    """Polynomial map G: R^n -> R^m."""

    def __init__(self, components: Sequence[Poly], n: int | None = None):
        comps = list(components)
        if n is None:
            if not comps:
                raise DimensionError("empty map needs explicit n")
            n = comps[0].n
        for c in comps:
            if c.n != n:
                raise DimensionError("map components disagree on n")
        self.components = tuple(comps)
        self.n = int(n)
        self.m = len(comps)
        self._cache: dict = {}

    @classmethod
    def identity(cls, n: int) -> "SmoothMap":
        return cls([Poly.variable(n, i) for i in range(n)], n)

    @classmethod
    def affine(cls, A, c=None) -> "SmoothMap":
        A = np.atleast_2d(np.asarray(A, float))
        c = np.zeros(A.shape[0]) if c is None else np.asarray(c, float)
        return cls([Poly.linear(A[i], c[i]) for i in range(A.shape[0])], A.shape[1])

    def __eq__(self, other) -> bool:
        return isinstance(other, SmoothMap) and self.n == other.n and self.components == other.components

    def __hash__(self) -> int:
        return hash((self.n, self.components))

    @property
    def is_affine(self) -> bool:
        return all(c.degree <= 1 for c in self.components)

    def affine_parts(self):
        rows = [c.affine_parts() for c in self.components]
        A = np.array([r[0] for r in rows]).reshape(self.m, self.n)
        c = np.array([r[1] for r in rows])
        return A, c

    def _compiled(self, what):
        if what not in self._cache:
            if what == "value":
                polys = list(self.components)
            elif what == "jac":
                polys = [g.partial(j) for g in self.components for j in range(self.n)]
            else:
                polys = [g.partial(i).partial(j) for g in self.components
                         for i in range(self.n) for j in range(self.n)]
            self._cache[what] = _stack(polys) if polys else None
        return self._cache[what]

    def _eval(self, what, X):
        X = np.asarray(X, float).reshape(-1, self.n)
        comp = self._compiled(what)
        if comp is None:
            return np.zeros((X.shape[0], 0))
        E, C = comp
        return _monomials(E, X) @ C

    def value_many(self, X) -> np.ndarray:
        return self._eval("value", X)

    def value(self, x) -> np.ndarray:
        self._check(x)
        return self._eval("value", x)[0]

    def jacobian(self, x) -> np.ndarray:
        self._check(x)
        return self._eval("jac", x)[0].reshape(self.m, self.n)

    def hessians(self, x) -> np.ndarray:
        self._check(x)
        return self._eval("hess", x)[0].reshape(self.m, self.n, self.n)

    def hessian_form(self, x):
        H = self.hessians(x)

        def form(u):
            u = np.asarray(u, float).reshape(self.n)
            return np.einsum("kij,i,j->k", H, u, u)

        return form

    def _check(self, x):
        if np.asarray(x).size != self.n:
            raise DimensionError(f"point of size {np.asarray(x).size} for a map on R^{self.n}")

    def compose_into(self, p: Poly) -> Poly:
        """p o G as a polynomial in n variables."""
        return p.compose(list(self.components))

    def to_json(self) -> dict:
        return {"n": self.n, "components": [c.to_json() for c in self.components]}

    @classmethod
    def from_json(cls, doc: dict) -> "SmoothMap":
        n = int(doc["n"])
        return cls([Poly.from_json(c, n) for c in doc["components"]], n)


def smooth_jet(G: SmoothMap, x):
    """(G(x), ∇G(x), u ↦ ∇²G(x)[u,u])."""
    return G.value(x), G.jacobian(x), G.hessian_form(x)
