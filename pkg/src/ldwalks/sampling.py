"""Increment laws: exact samplers and closed-form distribution functionals."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from scipy import integrate

from .special import upper_incomplete_gamma


class RngStream:
    """Independent, reproducible random stream keyed by ``(seed, stream_id)``.

    Backed by a counter-based Philox generator.  Sub-streams are derived
    through :class:`numpy.random.SeedSequence` spawn keys, so ``substream(b)``
    is a pure function of ``(seed, stream_id, b)``.
    """

    def __init__(self, seed: int = 0, stream_id: int = 0, *, _key: tuple[int, ...] | None = None):
        if seed < 0 or stream_id < 0:
            raise ValueError("seed and stream_id must be non-negative")
        self.seed = int(seed)
        self.stream_id = int(stream_id)
        self._key = _key if _key is not None else (self.stream_id,)
        ss = np.random.SeedSequence(self.seed, spawn_key=self._key)
        self.generator = np.random.Generator(np.random.Philox(ss))

    def substream(self, index: int) -> "RngStream":
        return RngStream(self.seed, self.stream_id, _key=self._key + (int(index),))

    def uniform(self, size=None):
        """Uniform variates on (0, 1]."""
        return 1.0 - self.generator.random(size)

    def __repr__(self):
        return f"RngStream(seed={self.seed}, stream_id={self.stream_id}, key={self._key})"


class TailScale(NamedTuple):
    """Survival asymptote ``ell_const * x**-beta / Gamma(1 - beta)``.

    Equivalently ``1 - laplace(s) ~ ell_const * s**beta`` as ``s -> 0``.
    For ``beta`` in (1, 2) both ``ell_const`` and ``Gamma(1 - beta)`` are
    negative, so the survival asymptote stays positive.
    """

    beta: float
    ell_const: float

    def survival_asymptote(self, x):
        return self.ell_const * np.power(x, -self.beta) / math.gamma(1.0 - self.beta)


def _check_beta(beta, allowed):
    lo, hi = allowed
    if not (lo < beta < hi) or beta == 1.0:
        raise ValueError(f"beta={beta} outside {allowed} (beta=1 excluded)")


class TailLaw:
    """Base class for one-dimensional increment laws."""

    support_min = 0.0
    positive = True
    symmetric = False

    def sample(self, stream: RngStream, size=None):
        return self.from_uniform(stream.uniform(size))

    def survival(self, x):
        raise NotImplementedError

    def density(self, x):
        raise NotImplementedError(f"{type(self).__name__} has no density")

    def laplace(self, s):
        return 1.0 - self.one_minus_laplace(s)

    def one_minus_laplace(self, s):
        """``1 - E exp(-s X)`` evaluated without cancellation near s = 0."""
        raise NotImplementedError

    def tilted_tail(self, t, sigma):
        """``int_{(t, inf)} exp(-sigma x) dF(x)``."""
        raise NotImplementedError

    def tail_scale(self) -> TailScale | None:
        return None

    @property
    def mean(self) -> float:
        raise NotImplementedError

    @property
    def breakpoints(self) -> tuple[float, ...]:
        """Points where the density is discontinuous."""
        return ()


@dataclass(frozen=True)
class Pareto(TailLaw):
    beta: float
    xm: float = 1.0

    def __post_init__(self):
        _check_beta(self.beta, (0.0, 2.0))
        if not self.xm > 0:
            raise ValueError("xm must be positive")

    @property
    def support_min(self):
        return self.xm

    @property
    def breakpoints(self):
        return (self.xm,)

    @property
    def mean(self):
        return self.beta * self.xm / (self.beta - 1.0) if self.beta > 1 else math.inf

    def from_uniform(self, u):
        """Inverse survival: ``u`` in (0, 1] is the survival level."""
        return self.xm * np.power(u, -1.0 / self.beta)

    def survival(self, x):
        x = np.asarray(x, dtype=float)
        return np.where(x < self.xm, 1.0, np.power(np.maximum(x, self.xm) / self.xm, -self.beta))

    def density(self, x):
        x = np.asarray(x, dtype=float)
        safe = np.maximum(x, self.xm)
        return np.where(x < self.xm, 0.0, self.beta / self.xm * np.power(safe / self.xm, -self.beta - 1.0))

    def one_minus_laplace(self, s):
        if s == 0:
            return 0.0
        u = s * self.xm
        # s * int_0^inf e^{-sx} survival(x) dx
        return -math.expm1(-u) + u**self.beta * upper_incomplete_gamma(1.0 - self.beta, u)

    def laplace(self, s):
        if s == 0:
            return 1.0
        u = s * self.xm
        if u < 1.0:
            return 1.0 - self.one_minus_laplace(s)
        return self.beta * u**self.beta * upper_incomplete_gamma(-self.beta, u)

    def tilted_tail(self, t, sigma):
        if t <= self.xm:
            return self.laplace(sigma)
        if sigma == 0:
            return float(self.survival(t))
        return self.beta * (sigma * self.xm) ** self.beta * upper_incomplete_gamma(-self.beta, sigma * t)

    def tail_scale(self):
        return TailScale(self.beta, math.gamma(1.0 - self.beta) * self.xm**self.beta)


@dataclass(frozen=True)
class SymmetricPareto(TailLaw):
    """Random sign times ``Pareto(beta, xm)``."""

    beta: float
    xm: float = 1.0
    positive = False
    symmetric = True

    def __post_init__(self):
        _check_beta(self.beta, (0.0, 1.0))
        if not self.xm > 0:
            raise ValueError("xm must be positive")

    @property
    def support_min(self):
        return -math.inf

    @property
    def magnitude(self) -> Pareto:
        return Pareto(self.beta, self.xm)

    @property
    def mean(self):
        return math.nan

    def from_uniform(self, u):
        # one uniform carries both the sign and the magnitude
        w = 2.0 * np.asarray(u, dtype=float)
        neg = w <= 1.0
        level = np.where(neg, w, w - 1.0)
        level = np.where(level <= 0.0, 1.0, level)
        mag = self.xm * np.power(level, -1.0 / self.beta)
        return np.where(neg, -mag, mag)

    def survival(self, x):
        x = np.asarray(x, dtype=float)
        right = 0.5 * np.power(np.maximum(x, self.xm) / self.xm, -self.beta)
        left = 1.0 - 0.5 * np.power(np.maximum(-x, self.xm) / self.xm, -self.beta)
        return np.where(x >= self.xm, right, np.where(x > -self.xm, 0.5, left))

    def one_minus_laplace(self, s):
        if s == 0:
            return 0.0
        raise ValueError("Laplace transform diverges for a two-sided heavy tail")

    def tail_scale(self):
        return TailScale(self.beta, 0.5 * math.gamma(1.0 - self.beta) * self.xm**self.beta)


def _split_quad(g, power, *scales):
    """``int_0^inf v**power g(v) dv`` for smooth ``g`` decaying like ``e**-v``.

    The first piece uses QUADPACK's algebraic end-point weight so the
    ``v**power`` singularity at 0 is integrated exactly.
    """
    # shape changes at r = 1 (v = scale); e^{-v} decays on v ~ 1
    pieces = sorted({0.0, 1.0, 40.0} | {c for c in scales if 0 < c < 40.0}) + [math.inf]
    total = 0.0
    for lo, hi in zip(pieces[:-1], pieces[1:]):
        if lo == 0.0:
            total += integrate.quad(g, lo, hi, weight="alg", wvar=(power, 0.0), epsabs=0.0, epsrel=1e-13,
                                    limit=200)[0]
        else:
            total += integrate.quad(lambda v: v**power * g(v), lo, hi, epsabs=0.0, epsrel=1e-13, limit=200)[0]
    return total


@dataclass(frozen=True)
class MittagLeffler(TailLaw):
    """Positive law with Laplace transform ``1 / (1 + s**beta)``."""

    beta: float

    def __post_init__(self):
        _check_beta(self.beta, (0.0, 1.0))

    @property
    def mean(self):
        return math.inf

    def sample(self, stream: RngStream, size=None):
        # T = E**(1/beta) * S with S one-sided stable, E[exp(-sS)] = exp(-s**beta)
        g = stream.generator
        b = self.beta
        u = math.pi * (1.0 - g.random(size))
        e1 = g.standard_exponential(size)
        e2 = g.standard_exponential(size)
        stable = (
            np.sin(b * u) / np.power(np.sin(u), 1.0 / b)
            * np.power(np.sin((1.0 - b) * u) / e2, (1.0 - b) / b)
        )
        return np.power(e1, 1.0 / b) * stable

    # Spectral form: survival = c * int_0^inf r^(b-1) e^(-rx) / D(r) dr,
    # D(r) = r^(2b) + 2 r^b cos(pi b) + 1, c = sin(pi b) / pi.
    def _spectral(self, x, power):
        b = self.beta
        cos_pb = math.cos(math.pi * b)

        def smooth(v):
            # r = v / x
            rb = (v / x) ** b
            return math.exp(-v) / (rb * rb + 2.0 * rb * cos_pb + 1.0)

        return math.sin(math.pi * b) / math.pi * _split_quad(smooth, power, x) * x ** (-power - 1.0)

    def _series(self, x, shift):
        # x^(shift-1) * sum_k (-x^b)^k / Gamma(b k + shift), for small x^b
        b = self.beta
        z = -(x**b)
        return x ** (shift - 1.0) * sum(z**k / math.gamma(b * k + shift) for k in range(60))

    def _evaluate(self, x, power, shift, at_zero):
        x = np.asarray(x, dtype=float)
        out = np.full_like(x, at_zero)
        flat = out.reshape(-1)
        for i, xi in enumerate(x.reshape(-1)):
            if xi <= 0:
                continue
            if xi**self.beta < 0.5:
                flat[i] = self._series(xi, shift)
            else:
                flat[i] = self._spectral(xi, power)
        return out if out.ndim else float(out)

    def survival(self, x):
        return self._evaluate(x, self.beta - 1.0, 1.0, 1.0)

    def density(self, x):
        return self._evaluate(x, self.beta, self.beta, 0.0)

    def one_minus_laplace(self, s):
        sb = s**self.beta
        return sb / (1.0 + sb)

    def laplace(self, s):
        return 1.0 / (1.0 + s**self.beta)

    def tilted_tail(self, t, sigma):
        if t <= 0:
            return self.laplace(sigma)
        b = self.beta
        cos_pb = math.cos(math.pi * b)

        def smooth(v):
            # 1 / (r + sigma) = (t / v) * v / (v + sigma t); the second factor is bounded
            rb = (v / t) ** b
            ratio = v / (v + shift) if shift > 0 else 1.0
            return math.exp(-v) * ratio / (rb * rb + 2.0 * rb * cos_pb + 1.0)

        shift = sigma * t

        integral = _split_quad(smooth, b - 1.0, t, shift) * t ** (-b)
        return math.sin(math.pi * b) / math.pi * integral * math.exp(-sigma * t)

    def tail_scale(self):
        return TailScale(self.beta, 1.0)


@dataclass(frozen=True)
class Exponential(TailLaw):
    mu: float = 1.0

    def __post_init__(self):
        if not self.mu > 0:
            raise ValueError("mu must be positive")

    @property
    def mean(self):
        return self.mu

    def from_uniform(self, u):
        return -self.mu * np.log(u)

    def survival(self, x):
        x = np.asarray(x, dtype=float)
        return np.where(x <= 0, 1.0, np.exp(-np.maximum(x, 0.0) / self.mu))

    def density(self, x):
        x = np.asarray(x, dtype=float)
        return np.where(x < 0, 0.0, np.exp(-np.maximum(x, 0.0) / self.mu) / self.mu)

    def one_minus_laplace(self, s):
        return self.mu * s / (1.0 + self.mu * s)

    def laplace(self, s):
        return 1.0 / (1.0 + self.mu * s)

    def tilted_tail(self, t, sigma):
        t = max(t, 0.0)
        return math.exp(-(sigma + 1.0 / self.mu) * t) / (1.0 + self.mu * sigma)


@dataclass(frozen=True)
class TruncatedPareto(TailLaw):
    """Pareto(beta, 1) conditioned on [1, cutoff]."""

    beta: float
    cutoff: float

    def __post_init__(self):
        _check_beta(self.beta, (0.0, 1.0))
        if not self.cutoff > 1:
            raise ValueError("cutoff must exceed 1")

    @property
    def support_min(self):
        return 1.0

    @property
    def breakpoints(self):
        return (1.0, self.cutoff)

    @property
    def c(self) -> float:
        return -math.expm1(-self.beta * math.log(self.cutoff))

    @property
    def mean(self):
        b, t = self.beta, self.cutoff
        return b / (1.0 - b) * (t ** (1.0 - b) - 1.0) / self.c

    def from_uniform(self, u):
        # conditional inverse CDF on [1, cutoff]
        tb = self.cutoff ** (-self.beta)
        return np.power(tb + np.asarray(u) * (1.0 - tb), -1.0 / self.beta)

    def survival(self, x):
        x = np.asarray(x, dtype=float)
        tb = self.cutoff ** (-self.beta)
        inner = (np.power(np.clip(x, 1.0, self.cutoff), -self.beta) - tb) / self.c
        return np.where(x < 1.0, 1.0, np.where(x >= self.cutoff, 0.0, inner))

    def density(self, x):
        x = np.asarray(x, dtype=float)
        inside = (x >= 1.0) & (x <= self.cutoff)
        return np.where(inside, self.beta / self.c * np.power(np.clip(x, 1.0, None), -self.beta - 1.0), 0.0)

    def one_minus_laplace(self, s):
        if s == 0:
            return 0.0
        b, t = self.beta, self.cutoff
        # s * int_0^t e^{-sx} survival(x) dx
        head = -math.expm1(-s)
        body = s**b * (upper_incomplete_gamma(1.0 - b, s) - upper_incomplete_gamma(1.0 - b, t * s))
        corr = t ** (-b) * (math.exp(-s) - math.exp(-t * s))
        return head + (body - corr) / self.c

    def laplace(self, s):
        if s == 0:
            return 1.0
        b, t = self.beta, self.cutoff
        if s < 1.0:
            return 1.0 - self.one_minus_laplace(s)
        return b / self.c * s**b * (upper_incomplete_gamma(-b, s) - upper_incomplete_gamma(-b, t * s))

    def tilted_tail(self, t, sigma):
        if t >= self.cutoff:
            return 0.0
        if t <= 1.0:
            return self.laplace(sigma)
        if sigma == 0:
            return float(self.survival(t))
        b = self.beta
        return b / self.c * sigma**b * (
            upper_incomplete_gamma(-b, sigma * t) - upper_incomplete_gamma(-b, sigma * self.cutoff)
        )


@dataclass(frozen=True)
class Deterministic(TailLaw):
    value: float = 1.0

    def __post_init__(self):
        if not self.value > 0:
            raise ValueError("value must be positive")

    @property
    def support_min(self):
        return self.value

    @property
    def mean(self):
        return self.value

    def from_uniform(self, u):
        return np.full(np.shape(u), self.value) if np.ndim(u) else self.value

    def survival(self, x):
        return np.where(np.asarray(x, dtype=float) < self.value, 1.0, 0.0)

    def one_minus_laplace(self, s):
        return -math.expm1(-s * self.value)

    def laplace(self, s):
        return math.exp(-s * self.value)

    def tilted_tail(self, t, sigma):
        return math.exp(-sigma * self.value) if t < self.value else 0.0


@dataclass(frozen=True)
class Rademacher(TailLaw):
    """Lattice +-1 law; only meant for brute-force enumeration checks."""

    positive = False
    symmetric = True
    support_min = -1.0

    @property
    def mean(self):
        return 0.0

    def from_uniform(self, u):
        return np.where(np.asarray(u) <= 0.5, -1.0, 1.0)

    def survival(self, x):
        x = np.asarray(x, dtype=float)
        return np.where(x < -1.0, 1.0, np.where(x < 1.0, 0.5, 0.0))

    @property
    def magnitude(self) -> Deterministic:
        return Deterministic(1.0)


_LAWS = {
    "pareto": Pareto,
    "symmetric-pareto": SymmetricPareto,
    "mittag-leffler": MittagLeffler,
    "exponential": Exponential,
    "truncated-pareto": TruncatedPareto,
    "deterministic": Deterministic,
    "rademacher": Rademacher,
}


def law_from_dict(spec: dict) -> TailLaw:
    """Build a law from ``{"law": "pareto", "beta": 0.5, "xm": 1.0}``."""
    spec = dict(spec)
    try:
        cls = _LAWS[spec.pop("law")]
    except KeyError as exc:
        raise ValueError(f"unknown law {exc.args[0]!r}; expected one of {sorted(_LAWS)}") from None
    return cls(**spec)


def law_to_dict(law: TailLaw) -> dict:
    name = {cls: key for key, cls in _LAWS.items()}[type(law)]
    return {"law": name, **{k: getattr(law, k) for k in law.__dataclass_fields__}}


def sample(law: TailLaw, stream: RngStream, size=None):
    return law.sample(stream, size)


def survival(law: TailLaw, x):
    return law.survival(x)


def laplace(law: TailLaw, s: float) -> float:
    if s < 0:
        raise ValueError("s must be non-negative")
    return law.laplace(s)


def tail_scale(law: TailLaw) -> TailScale | None:
    return law.tail_scale()
