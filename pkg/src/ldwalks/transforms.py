"""Closed-form double transforms and numerical checks of the Tauberian hypotheses.

``double_transform`` evaluates

    G(lam, s) = int_0^inf int_0^inf exp(-lam t - s x) P(C_tau(t) > x) dx dt

for the first-passage couplings.  Every ``1 - laplace`` factor is taken from
``TailLaw.one_minus_laplace`` so nothing is formed by subtracting numbers
close to 1; the hypothesis regime lives exactly where that would fail.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .processes import AbsValue, Additive, Identical, Independent
from .sampling import TailLaw, TruncatedPareto
from .special import gamma

_TINY = 1e-300


def _guard(denominator: float, lam: float, s: float) -> float:
    if not denominator > _TINY:
        raise ValueError(f"denominator {denominator!r} underflows at lam={lam}, s={s}")
    return denominator


def _one_minus_product(om_a: float, om_b: float) -> float:
    # 1 - a*b written as (1-a) + a(1-b)
    return om_a + (1.0 - om_a) * om_b


def double_transform(model, lam: float, s: float) -> float:
    """Double transform of the stopped-cost tail for a first-passage coupling."""
    if not (lam > 0 and s > 0):
        raise ValueError("lam and s must be positive")
    if isinstance(model, Independent):
        om_y = model.y_law.one_minus_laplace(s)
        den = _one_minus_product(model.x_law.one_minus_laplace(lam), om_y)
        num = om_y
    elif isinstance(model, Identical):
        num = model.x_law.one_minus_laplace(s)
        den = model.x_law.one_minus_laplace(s + lam)
    elif isinstance(model, Additive):
        om_w = model.w_law.one_minus_laplace(s)
        num = _one_minus_product(om_w, model.x_law.one_minus_laplace(s))
        den = _one_minus_product(om_w, model.x_law.one_minus_laplace(s + lam))
    elif isinstance(model, AbsValue):
        raise ValueError("AbsValue has no first-passage double transform; use generating_transform_conditioned")
    else:
        raise TypeError(f"unsupported model {model!r}")
    return num / (s * lam * _guard(den, lam, s))


def counting_double_transform(model: Independent, lam: float, s: float) -> float:
    """Double transform of ``P(C_{N(t)} > x)`` with ``N(t) = tau(t) - 1``."""
    if not isinstance(model, Independent):
        raise ValueError("the counting process is defined for the Independent model")
    if not (lam > 0 and s > 0):
        raise ValueError("lam and s must be positive")
    om_x = model.x_law.one_minus_laplace(lam)
    om_y = model.y_law.one_minus_laplace(s)
    den = _guard(_one_minus_product(om_x, om_y), lam, s)
    return (1.0 - om_x) * om_y / (s * lam * den)


def generating_transform_iid(z: float, s: float, y_law: TailLaw) -> float:
    """``sum_n z**n int exp(-s x) P(Y_1 + ... + Y_n > x) dx``."""
    if not 0 <= z < 1:
        raise ValueError("z must lie in [0, 1)")
    if not s > 0:
        raise ValueError("s must be positive")
    om = y_law.one_minus_laplace(s)
    return z * om / (s * (1.0 - z) * ((1.0 - z) + z * om))


def generating_transform_conditioned(z: float, s: float, y_law: TailLaw) -> float:
    """``(1/s) [(1 - z)**-1/2 - (1 - z p_Y(s))**-1/2]`` without cancellation.

    ``y_law`` is the law of the absolute increment.
    """
    if not 0 <= z < 1:
        raise ValueError("z must lie in [0, 1)")
    if not s > 0:
        raise ValueError("s must be positive")
    a = 1.0 - z
    gap = z * y_law.one_minus_laplace(s)
    b = a + gap
    ra, rb = math.sqrt(a), math.sqrt(b)
    return gap / (s * ra * rb * (ra + rb))


def empirical_laplace(samples, s: float) -> tuple[float, float]:
    """Sample mean of ``exp(-s * sample)`` and its standard error."""
    x = np.asarray(samples, dtype=float)
    if x.size == 0:
        raise ValueError("samples must be non-empty")
    v = np.exp(-s * x)
    if x.size == 1:
        return float(v[0]), 0.0
    return float(v.mean()), float(v.std(ddof=1) / math.sqrt(x.size))


# -- hypothesis checks ---------------------------------------------------------


@dataclass(frozen=True)
class HypothesisParams:
    """Target ``G(lam, s) ~ L * lam**-gamma * s**-alpha * ell`` on ``0 < s <= theta s_lam``."""

    alpha: float
    gamma: float
    s_rule: Callable[[float], float]
    ell_s_const: float = 1.0
    L_const: float = 1.0
    theta: float = 1.0
    tolerance: float = 0.05
    points: int = 64
    span: float = 1e-6

    def __post_init__(self):
        if not self.alpha > 0:
            raise ValueError("alpha must be positive")
        if not self.gamma > 1:
            raise ValueError("gamma must exceed 1")
        if not self.theta > 0:
            raise ValueError("theta must be positive")
        if self.points < 2:
            raise ValueError("need at least two s points")

    def normalizer(self, lam: float, s: float) -> float:
        with np.errstate(over="ignore"):
            return self.L_const * self.ell_s_const * lam ** (-self.gamma) * s ** (-self.alpha)


@dataclass(frozen=True)
class HypothesisRow:
    lam: float
    grid_size: int
    sup_deviation: float
    argmax_s: float


@dataclass
class HypothesisResult:
    rows: list[HypothesisRow] = field(default_factory=list)
    tolerance: float = 0.05

    @property
    def verdict(self) -> str:
        devs = [r.sup_deviation for r in self.rows]
        if len(devs) < 3:
            return "FAIL"
        tail = devs[-3:]
        decreasing = tail[0] > tail[1] > tail[2]
        return "PASS" if decreasing and tail[-1] < self.tolerance else "FAIL"

    @property
    def passed(self) -> bool:
        return self.verdict == "PASS"


def _as_transform(model_or_closure):
    if callable(model_or_closure) and not hasattr(model_or_closure, "x_law"):
        return model_or_closure
    return lambda lam, s: double_transform(model_or_closure, lam, s)


def _strictly_decreasing(grid) -> np.ndarray:
    grid = np.asarray(grid, dtype=float)
    if grid.ndim != 1 or grid.size == 0 or np.any(grid <= 0):
        raise ValueError("grid must be a non-empty sequence of positive numbers")
    if np.any(np.diff(grid) >= 0):
        raise ValueError("lambda grid must be strictly decreasing")
    return grid


def check_hypothesis(model_or_closure, params: HypothesisParams, lambda_grid) -> HypothesisResult:
    """Sup over a log-uniform s grid of ``|G / normalizer - 1|`` for each lambda.

    ``model_or_closure`` is a coupling model or any callable ``(lam, s) -> G``;
    discrete-time transforms are checked by passing ``lam = 1 - z``.
    """
    transform = _as_transform(model_or_closure)
    rows = []
    for lam in _strictly_decreasing(lambda_grid):
        top = params.theta * params.s_rule(lam)
        if not top > 0:
            raise ValueError(f"s_rule gave {top} at lam={lam}")
        s_grid = np.geomspace(params.span * top, top, params.points)
        devs = np.empty(s_grid.size)
        for i, s in enumerate(s_grid):
            norm = params.normalizer(lam, s)
            if not (math.isfinite(norm) and norm > 0):
                raise OverflowError(f"normalizer overflows at lam={lam}, s={s}")
            devs[i] = abs(transform(lam, s) / norm - 1.0)
        j = int(np.argmax(devs))
        rows.append(HypothesisRow(float(lam), s_grid.size, float(devs[j]), float(s_grid[j])))
    return HypothesisResult(rows, params.tolerance)


def window_deviation(law: TruncatedPareto, s) -> np.ndarray:
    """``|c_t G_t(s) / (Gamma(1-beta) s**(beta-1)) - 1|`` with ``G_t = (1 - p_t(s)) / s``."""
    s = np.atleast_1d(np.asarray(s, dtype=float))
    scale = gamma(1.0 - law.beta)
    vals = np.array([law.c * law.one_minus_laplace(v) / (scale * v**law.beta) for v in s])
    return np.abs(vals - 1.0)


def check_window_hypothesis(
    beta: float,
    t_grid,
    s_star_rule: Callable[[float], float] = lambda t: t**-0.5,
    s_rule: Callable[[float], float] = lambda t: t**-0.25,
    *,
    theta: float = 1.0,
    tolerance: float = 0.1,
    points: int = 64,
) -> HypothesisResult:
    """Two-sided window ``[theta s*_t, theta s_t]`` check for truncated Pareto laws.

    Rows are keyed by ``t`` (stored in the ``lam`` field); the verdict needs
    the deviation to decrease along ``t_grid`` and end below ``tolerance``.
    """
    t_grid = np.asarray(t_grid, dtype=float)
    if t_grid.ndim != 1 or t_grid.size == 0 or np.any(np.diff(t_grid) <= 0):
        raise ValueError("t grid must be strictly increasing")
    rows = []
    for t in t_grid:
        lo, hi = theta * s_star_rule(t), theta * s_rule(t)
        if not lo < hi:
            raise ValueError(f"empty window [{lo}, {hi}] at t={t}")
        s_grid = np.geomspace(lo, hi, points)
        devs = window_deviation(TruncatedPareto(beta, t), s_grid)
        j = int(np.argmax(devs))
        rows.append(HypothesisRow(float(t), points, float(devs[j]), float(s_grid[j])))
    return HypothesisResult(rows, tolerance)


def power_rule(exponent: float, scale: float = 1.0) -> Callable[[float], float]:
    """``lam -> scale * lam**exponent``."""

    def rule(lam):
        return scale * lam**exponent

    rule.exponent = exponent
    return rule


__all__ = [
    "HypothesisParams",
    "HypothesisResult",
    "HypothesisRow",
    "check_hypothesis",
    "check_window_hypothesis",
    "counting_double_transform",
    "double_transform",
    "empirical_laplace",
    "generating_transform_conditioned",
    "generating_transform_iid",
    "power_rule",
    "window_deviation",
]
