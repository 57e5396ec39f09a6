"""Named test functions used by tests, scripts and the CLI."""
from __future__ import annotations

from .function_algebra import (
    Indicator, MaxOfSmooth, MinOfSmooth, NormL1, NormL2, Polynomial, SquaredComposite, Sum,
)
from .polyhedra import Polyhedron
from .polynomials import Poly


def var(n: int, i: int) -> Poly:
    return Poly.variable(n, i)


def _x():
    return var(1, 0)


def square():
    return Polynomial(_x() ** 2)


def abs1():
    return NormL1(1)


def neg_abs():
    x = _x()
    return MinOfSmooth((x, -x))


def double_well():
    x = _x()
    return Polynomial((x ** 2 - Poly.constant(1, 1.0)) ** 2)


def cubic():
    x = _x()
    return Polynomial(x ** 3 - 3.0 * x)


def quartic():
    return Polynomial(_x() ** 4)


def square_plus_neg_abs():
    x = _x()
    return Sum((Polynomial(x ** 2), MinOfSmooth((x, -x))))


def cubic_on_interval():
    x = _x()
    return Sum((Polynomial(x ** 3), Indicator(Polyhedron.box([-1.0], [1.0]))))


def l1_squared_2d():
    return SquaredComposite(NormL1(2))


def l2_norm(n: int = 2):
    return NormL2(n)


def max_xy():
    return MaxOfSmooth((var(2, 0), var(2, 1)))


CATALOG = {
    "square": square,
    "abs": abs1,
    "neg_abs": neg_abs,
    "double_well": double_well,
    "cubic": cubic,
    "quartic": quartic,
    "square_plus_neg_abs": square_plus_neg_abs,
    "cubic_on_interval": cubic_on_interval,
    "l1_squared_2d": l1_squared_2d,
    "max_xy": max_xy,
}


def get(name: str):
    try:
        return CATALOG[name]()
    except KeyError:
        raise KeyError(f"unknown catalog function {name!r}; known: {sorted(CATALOG)}") from None
