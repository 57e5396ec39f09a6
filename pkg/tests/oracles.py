"""Independent reference computations used by the tests.

Nothing here calls into tiltlab's oracles: values come from closed forms, brute-force
grids or finite differences, so agreement is a genuine cross-check.
"""
import numpy as np


def fd_grad(fun, x, h=1e-6):
    x = np.asarray(x, float)
    g = np.zeros_like(x)
    for i in range(x.size):
        e = np.zeros_like(x)
        e[i] = h
        g[i] = (fun(x + e) - fun(x - e)) / (2 * h)
    return g


def fd_jacobian(F, x, h=1e-6):
    x = np.asarray(x, float)
    cols = []
    for i in range(x.size):
        e = np.zeros_like(x)
        e[i] = h
        cols.append((np.asarray(F(x + e)) - np.asarray(F(x - e))) / (2 * h))
    return np.stack(cols, axis=-1)


def brute_force_no_lower(fun, x, r=1e-2, samples=10_000, seed=123, slack=1e-12):
    """No sampled point within radius r has a lower value than x (uniform in the ball)."""
    x = np.asarray(x, float)
    rng = np.random.default_rng(seed)
    n = x.size
    D = rng.normal(size=(samples, n))
    D /= np.linalg.norm(D, axis=1)[:, None]
    R = r * rng.uniform(size=(samples, 1)) ** (1.0 / n)
    X = x + D * R
    fx = fun(x)
    vals = np.array([fun(p) for p in X])
    return bool(np.all(vals >= fx - slack * (1 + abs(fx))))


def grid_argmins(fun, lo, hi, nodes=200_001):
    """Grid minimizers of a 1-D function (all nodes within 1e-12 of the minimum)."""
    t = np.linspace(lo, hi, nodes)
    vals = np.array([fun(np.array([s])) for s in t]) if nodes < 5000 else fun(t)
    m = np.min(vals)
    return t[vals <= m + 1e-12], m


def double_well_critical(v):
    """Real roots of 4x^3 - 4x - v."""
    r = np.roots([4.0, 0.0, -4.0, -v])
    return np.sort(r[np.abs(r.imag) < 1e-9].real)


def double_well_transition():
    """v where 4x^3 - 4x - v has a double root: x = ±1/sqrt(3)."""
    x = 1 / np.sqrt(3)
    return abs(4 * x ** 3 - 4 * x)


def constrained_kkt(v, y):
    """min -v x s.t. x^2 - 1 + y <= 0 for v != 0."""
    s = np.sqrt(1.0 - y)
    return np.sign(v) * s, abs(v) / (2.0 * s)


def brute_force_no_lower_many(fun_many, x, r=1e-2, samples=10_000, seed=123, slack=1e-12):
    """Vectorized brute_force_no_lower: fun_many maps an (k, n) array to k values."""
    x = np.asarray(x, float)
    rng = np.random.default_rng(seed)
    n = x.size
    D = rng.normal(size=(samples, n))
    D /= np.linalg.norm(D, axis=1)[:, None]
    X = x + D * (r * rng.uniform(size=(samples, 1)) ** (1.0 / n))
    fx = float(fun_many(x[None, :])[0])
    return bool(np.all(fun_many(X) >= fx - slack * (1 + abs(fx))))


def one_sided_slopes(fun, x, h=1e-7):
    """(left, right) difference slopes of a 1-D function; ±inf where the function leaves its domain."""
    f0 = fun(x)
    fl, fr = fun(x - h), fun(x + h)
    left = (f0 - fl) / h if np.isfinite(fl) else -np.inf
    right = (fr - f0) / h if np.isfinite(fr) else np.inf
    return left, right


def basin_radius_1d(fun_many, x, r=1e-2, nodes=20_001):
    """Distance from x to the nearest discrete local maximum of a 1-D function, capped at r.

    A strict local minimizer whose basin is narrower than r has lower values inside the
    r-ball; this radius is the largest ball the no-lower-value test can fairly use.
    """
    x = float(np.asarray(x, float).reshape(-1)[0])
    t = np.linspace(x - r, x + r, nodes)
    vals = fun_many(t[:, None])
    c = nodes // 2
    out = r
    for step in (1, -1):
        i = c
        while 0 <= i + step < nodes and vals[i + step] >= vals[i]:
            i += step
        if 0 < i < nodes - 1:
            out = min(out, abs(t[i] - x))
    return out
