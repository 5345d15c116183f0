"""Deterministic solver for the renewal equation of the stopped-cost transform.

For fixed ``s`` the transform ``h_t = E exp(-s C_tau(t))`` satisfies

    h_t = int_0^t h_{t-x} k(x) dx + q(t),      q(t) = int_t^inf k(x) dx,

with kernel ``k(x) = factor * p_X(x) * exp(-sigma * x)``.  The solver uses
product integration: ``h`` is interpolated linearly on each cell and the
kernel is integrated exactly against it.  For smooth kernels this is the
trapezoid rule; it also copes with the integrable ``x**(beta - 1)``
singularity of the Mittag-Leffler density at the origin.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np
from scipy import integrate
from scipy.special import roots_legendre

from .processes import AbsValue, Additive, Identical, Independent, StepLimitExceeded
from .sampling import Deterministic, MittagLeffler, Rademacher, TailLaw

log = logging.getLogger(__name__)

MAX_STEPS = 10**7
_GL_NODES, _GL_WEIGHTS = roots_legendre(8)


@dataclass(frozen=True)
class RenewalKernel:
    x_law: TailLaw
    s: float
    sigma: float
    factor: float

    def k(self, x):
        x = np.asarray(x, dtype=float)
        return self.factor * self.x_law.density(x) * np.exp(-self.sigma * x)

    def q(self, t) -> float:
        return self.factor * self.x_law.tilted_tail(t, self.sigma)

    @property
    def total_mass(self) -> float:
        return self.factor * self.x_law.laplace(self.sigma)

    def cell_moments(self, dt: float, n: int):
        """Zeroth and normalised first moments of ``k`` on ``[j dt, (j+1) dt]``.

        Returns ``(m0, m1)`` with ``m0_j = int k`` and
        ``m1_j = int (x - j dt) / dt * k``.
        """
        if isinstance(self.x_law, MittagLeffler):
            m0, m1 = _mittag_leffler_moments(self.x_law.beta, self.sigma, dt, n)
        else:
            m0, m1 = _gauss_legendre_moments(self.x_law, self.sigma, dt, n)
        return self.factor * m0, self.factor * m1


def build_kernel(model, s: float) -> RenewalKernel:
    if s < 0:
        raise ValueError("s must be non-negative")
    if isinstance(model, AbsValue):
        raise ValueError("walks conditioned to stay positive have no renewal equation of this form")
    if isinstance(model.x_law, (Deterministic, Rademacher)):
        raise ValueError("renewal kernel needs a control law with a density")
    if isinstance(model, Identical):
        return RenewalKernel(model.x_law, s, s, 1.0)
    if isinstance(model, Independent):
        return RenewalKernel(model.x_law, s, 0.0, model.y_law.laplace(s))
    if isinstance(model, Additive):
        return RenewalKernel(model.x_law, s, s, model.w_law.laplace(s))
    raise TypeError(f"unsupported model {model!r}")


def _gauss_legendre_moments(law: TailLaw, sigma: float, dt: float, n: int):
    edges = dt * np.arange(n + 1)
    breaks = [b for b in law.breakpoints if 0 < b < edges[-1]]
    points = np.union1d(edges, breaks)
    lo, hi = points[:-1], points[1:]
    cell = np.minimum(np.searchsorted(edges, lo, side="right") - 1, n - 1)
    half = 0.5 * (hi - lo)
    x = 0.5 * (hi + lo)[:, None] + half[:, None] * _GL_NODES[None, :]
    f = law.density(x) * np.exp(-sigma * x) * half[:, None]
    piece0 = f @ _GL_WEIGHTS
    piece1 = ((x - edges[cell][:, None]) / dt * f) @ _GL_WEIGHTS
    m0 = np.zeros(n)
    m1 = np.zeros(n)
    np.add.at(m0, cell, piece0)
    np.add.at(m1, cell, piece1)
    return m0, m1


def _one_minus_exp_times(y):
    # 1 - e^{-y}(1 + y), accurate for small y
    y = np.asarray(y, dtype=float)
    small = y < 1e-3
    ys = np.where(small, y, 0.0)
    series = ys * ys * (0.5 - ys / 3.0 + ys * ys / 8.0)
    direct = -np.expm1(-y) - y * np.exp(-y)
    return np.where(small, series, direct)


def _mittag_leffler_moments(beta: float, sigma: float, dt: float, n: int):
    # density = c * int_0^inf r^b e^{-rx} / D(r) dr, so the x-integrals over a
    # cell are elementary and only the spectral integral is numerical.
    c = math.sin(math.pi * beta) / math.pi
    cos_pb = math.cos(math.pi * beta)
    left = dt * np.arange(n)
    span = min(700.0, 36.0 / beta)

    def integrand(u):
        r = math.exp(u)
        rb = r**beta
        weight = c * r * rb / (rb * rb + 2.0 * rb * cos_pb + 1.0)
        rho = r + sigma
        decay = np.exp(-rho * left)
        m0 = decay * (-math.expm1(-rho * dt)) / rho
        m1 = decay * _one_minus_exp_times(rho * dt) / (rho * rho * dt)
        return weight * np.concatenate([m0, m1])

    val, _ = integrate.quad_vec(integrand, -span, span, epsabs=1e-15, epsrel=1e-12, norm="max", limit=10_000)
    return val[:n], val[n:]


@dataclass
class TransformCurve:
    s: float
    t_grid: np.ndarray
    values: np.ndarray
    step: float
    scheme: str = "product-trapezoid"
    clamped: int = 0

    def at(self, t: float) -> float:
        return float(np.interp(t, self.t_grid, self.values))


def solve(kernel: RenewalKernel, t_max: float, dt: float) -> TransformCurve:
    """Step the renewal equation on ``[0, t_max]`` with spacing ``dt``."""
    if not dt > 0:
        raise ValueError("dt must be positive")
    n = int(round(t_max / dt))
    if n < 1:
        raise ValueError("t_max must cover at least one step")
    if n > MAX_STEPS:
        raise StepLimitExceeded(f"{n} steps exceed the cap of {MAX_STEPS}")
    m0, m1 = kernel.cell_moments(dt, n)
    a = m0 - m1
    b = m1
    diag = 1.0 - a[0]
    if diag <= 0:
        raise ValueError(f"dt={dt} too coarse: diagonal factor {diag} <= 0")
    q = kernel.total_mass - np.concatenate([[0.0], np.cumsum(m0)])
    w = a.copy()
    w[1:] += b[:-1]
    h = np.empty(n + 1)
    h[0] = q[0]
    for i in range(1, n + 1):
        acc = q[i] + b[i - 1] * h[0]
        if i > 1:
            acc += np.dot(w[1:i], h[i - 1:0:-1])
        h[i] = acc / diag
    outside = (h < -1e-12) | (h > 1 + 1e-12)
    clamped = int(np.count_nonzero(outside))
    if clamped:
        log.warning("renewal solve: %d values outside [0, 1] clamped", clamped)
    np.clip(h, 0.0, 1.0, out=h)
    return TransformCurve(kernel.s, dt * np.arange(n + 1), h, dt, clamped=clamped)


def grid_convergence(kernel: RenewalKernel, t_max: float, dt: float) -> float:
    """Ratio of successive refinement differences (about 4 for second order)."""
    coarse, mid, fine = (solve(kernel, t_max, dt / k) for k in (1, 2, 4))
    e1 = np.max(np.abs(coarse.values - mid.values[::2]))
    e2 = np.max(np.abs(mid.values - fine.values[::2]))
    return float(e1 / e2) if e2 > 0 else math.inf


def mean_stopped_cost(kernel_for, t: float, dt: float, s: float = 1e-4) -> float:
    """``E C_tau(t)`` from ``(1 - h_t(s)) / s`` with one Richardson step in s.

    ``kernel_for(s)`` must return the kernel at transform variable ``s``.
    """
    d1 = (1.0 - solve(kernel_for(s), t, dt).values[-1]) / s
    d2 = (1.0 - solve(kernel_for(2 * s), t, dt).values[-1]) / (2 * s)
    return 2.0 * d1 - d2
