"""Gamma-family special functions.

The complete gamma function comes from :mod:`math` (Lanczos-type, ~1e-15
relative).  The upper incomplete gamma function is implemented here because
the transforms need it for negative first arguments, which most libraries
do not cover.
"""

from __future__ import annotations

import math
import sys

_EPS = 1e-16
_TINY = sys.float_info.min / _EPS
_MAX_ITER = 10_000


def _check_pole(z: float) -> None:
    if z <= 0 and float(z).is_integer():
        raise ValueError(f"gamma has a pole at nonpositive integer {z}")


def gamma(z: float) -> float:
    _check_pole(z)
    return math.gamma(z)


def log_gamma(z: float) -> float:
    """log|Gamma(z)|."""
    _check_pole(z)
    return math.lgamma(z)


def _prefactor(a: float, x: float) -> float:
    # x**a * exp(-x) without intermediate overflow
    return math.exp(a * math.log(x) - x)


def _upper_cf(a: float, x: float) -> float:
    """Legendre continued fraction (modified Lentz), valid for any real a."""
    b = x + 1.0 - a
    c = 1.0 / _TINY
    d = 1.0 / b if b != 0 else 1.0 / _TINY
    h = d
    for i in range(1, _MAX_ITER):
        an = -i * (i - a)
        b += 2.0
        d = an * d + b
        if abs(d) < _TINY:
            d = _TINY
        c = b + an / c
        if abs(c) < _TINY:
            c = _TINY
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < _EPS:
            return _prefactor(a, x) * h
    raise ArithmeticError(f"continued fraction for Gamma({a}, {x}) did not converge")


def _lower_series(a: float, x: float) -> float:
    """gamma(a, x) for a > 0 by the power series."""
    term = 1.0 / a
    total = term
    ap = a
    for _ in range(_MAX_ITER):
        ap += 1.0
        term *= x / ap
        total += term
        if abs(term) < abs(total) * _EPS:
            return total * _prefactor(a, x)
    raise ArithmeticError(f"series for gamma({a}, {x}) did not converge")


def upper_incomplete_gamma(a: float, x: float) -> float:
    """Upper incomplete gamma Gamma(a, x) = int_x^inf u^(a-1) e^(-u) du.

    ``a`` may be negative.  For ``x >= 1.5`` the continued fraction is used
    directly; below that the value at ``a + m`` in (0, 1] comes from the
    series and is carried down with
    ``Gamma(a, x) = (Gamma(a+1, x) - x**a e**-x) / a``.
    """
    if x == 0 and a > 0:
        return math.gamma(a)
    if not x > 0:
        raise ValueError(f"x must be positive (or zero with a > 0), got {x}")
    if x >= max(1.5, a + 1.0):
        return _upper_cf(a, x)
    if a > 0:
        return math.gamma(a) - _lower_series(a, x)
    _check_pole(a)
    m = math.ceil(-a) if not (-a).is_integer() else int(-a) + 1
    a0 = a + m
    if a0 > 1.0:
        a0 -= 1.0
        m -= 1
    value = math.gamma(a0) - _lower_series(a0, x)
    for k in range(1, m + 1):
        ak = a0 - k
        value = (value - _prefactor(ak, x)) / ak
    return value


__all__ = ["gamma", "log_gamma", "upper_incomplete_gamma"]
