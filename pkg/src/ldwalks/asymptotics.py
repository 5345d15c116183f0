"""Leading-order large-deviation tail formulas.

Slowly varying factors are constants, so every prediction is a power law
``prefactor * t**t_exponent * x**x_exponent`` together with a validity ratio
that must be small for the asymptote to apply.
"""

from __future__ import annotations

from dataclasses import dataclass

from .sampling import SymmetricPareto, TailLaw, TailScale
from .special import gamma, log_gamma, upper_incomplete_gamma

DEFAULT_VALIDITY_GATE = 0.1


@dataclass(frozen=True)
class Validity:
    """Validity ratio ``t**t_power * x**x_power``, small inside the LD region."""

    description: str
    t_power: float
    x_power: float

    def ratio(self, t, x) -> float:
        return t**self.t_power * x**self.x_power


@dataclass(frozen=True)
class LDPrediction:
    model_tag: str
    prefactor: float
    t_exponent: float
    x_exponent: float
    validity: Validity
    fixed_t: float | None = None

    def __post_init__(self):
        if self.x_exponent >= 0:
            raise ValueError("x_exponent must be negative")
        if self.prefactor < 0:
            raise ValueError("prefactor must be non-negative")

    def _check_t(self, t):
        if self.fixed_t is not None and t != self.fixed_t:
            raise ValueError(f"{self.model_tag} prediction was built for t={self.fixed_t}, got {t}")

    def evaluate(self, t, x) -> float:
        self._check_t(t)
        if t == 0 and self.t_exponent > 0:
            return 0.0
        t_part = 1.0 if self.t_exponent == 0 else t**self.t_exponent
        return self.prefactor * t_part * x**self.x_exponent

    def validity_ratio(self, t, x) -> float:
        self._check_t(t)
        return self.validity.ratio(t, x)

    def is_valid(self, t, x, gate: float = DEFAULT_VALIDITY_GATE) -> bool:
        return self.validity_ratio(t, x) < gate


def require_tail_scale(law: TailLaw) -> TailScale:
    scale = law.tail_scale()
    if scale is None:
        raise ValueError(f"{law!r} is not regularly varying; no large-deviation prediction applies")
    return scale


def ladder_survival(n: int) -> float:
    """``P(T- > n) = C(2n, n) / 4**n`` for a symmetric continuous walk."""
    if n < 0:
        raise ValueError("n must be non-negative")
    p = 1.0
    for k in range(1, n + 1):
        p *= (2 * k - 1) / (2 * k)
    return p


# -- prediction builders -------------------------------------------------------


def iid_prediction(beta: float, ell_const: float, centered: bool = False) -> LDPrediction:
    if centered and not 1 < beta < 2:
        raise ValueError("centering applies to beta in (1, 2)")
    if not centered and not 0 < beta < 1:
        raise ValueError("uncentered sums need beta in (0, 1)")
    return LDPrediction(
        "iid",
        ell_const / gamma(1.0 - beta),
        1.0,
        -beta,
        Validity("n * x^-beta -> 0", 1.0, -beta),
    )


def random_sum_prediction(beta: float, ell_y: float, gamma_x: float, c_x: float) -> LDPrediction:
    """Cost stopped at first passage with independent control and cost.

    ``1 - laplace_X(lam) ~ c_x * lam**gamma_x`` and the cost survival is
    ``ell_y * x**-beta / Gamma(1 - beta)``; the prediction is
    ``t**gamma_x * P(Y > x) / (c_x * Gamma(1 + gamma_x))``.
    """
    if not 0 < gamma_x <= 1:
        raise ValueError("gamma_x must lie in (0, 1]")
    if not c_x > 0:
        raise ValueError("c_x must be positive")
    return LDPrediction(
        "random-sum",
        ell_y / (gamma(1.0 - beta) * c_x * gamma(1.0 + gamma_x)),
        gamma_x,
        -beta,
        Validity("t^gamma * x^-beta -> 0", gamma_x, -beta),
    )


def leapover_prediction(beta: float) -> LDPrediction:
    _check_unit_beta(beta)
    return LDPrediction(
        "leapover",
        1.0 / (gamma(1.0 - beta) * gamma(1.0 + beta)),
        beta,
        -beta,
        Validity("t / x -> 0", 1.0, -1.0),
    )


def leapover_fixed_t_prediction(beta: float, t: float) -> LDPrediction:
    """Fixed-t tail of the leapover for Mittag-Leffler increments."""
    _check_unit_beta(beta)
    g = gamma(1.0 + beta)
    return LDPrediction(
        "leapover-fixed-t",
        (t**beta + g) / (g * gamma(1.0 - beta)),
        0.0,
        -beta,
        Validity("t / x -> 0 (fixed t)", 1.0, -1.0),
        fixed_t=t,
    )


def gut_prediction(beta: float, ell_w: float, mu: float) -> LDPrediction:
    """Cost ``X + W`` stopped at first passage; ``X`` has mean ``mu``."""
    _check_unit_beta(beta)
    if not mu > 0:
        raise ValueError("mu must be positive")
    return LDPrediction(
        "gut",
        ell_w / (mu * gamma(1.0 - beta)),
        1.0,
        -beta,
        Validity("t * x^-beta -> 0", 1.0, -beta),
    )


def conditioned_prediction(x_law: SymmetricPareto, n: int) -> LDPrediction:
    """Path length of an n-step walk jointly with staying positive."""
    if n < 1:
        raise ValueError("n must be >= 1")
    beta = x_law.beta
    one_sided = 0.5 * x_law.xm**beta
    return LDPrediction(
        "conditioned",
        2.0 * n * ladder_survival(n) * one_sided,
        0.0,
        -beta,
        Validity("n * x^-beta -> 0", 1.0, -beta),
        fixed_t=n,
    )


def _check_unit_beta(beta):
    if not 0 < beta < 1:
        raise ValueError("beta must lie in (0, 1)")


# -- scalar conveniences ---------------------------------------------------------


def predict_iid(beta, ell_const, n, x, centered=False) -> float:
    return iid_prediction(beta, ell_const, centered).evaluate(n, x)


def predict_random_sum(beta, ell_y, gamma_x, c_x, t, x) -> float:
    return random_sum_prediction(beta, ell_y, gamma_x, c_x).evaluate(t, x)


def predict_leapover(beta, ell_x_const, t, x) -> float:
    # a constant slowly varying factor cancels between ell(t) and ell(x)
    return leapover_prediction(beta).evaluate(t, x)


def predict_leapover_fixed_t(beta, t, x) -> float:
    return leapover_fixed_t_prediction(beta, t).evaluate(t, x)


def predict_gut(beta, ell_w_const, mu, t, x) -> float:
    return gut_prediction(beta, ell_w_const, mu).evaluate(t, x)


def predict_conditioned(x_law: SymmetricPareto, n: int, x: float) -> float:
    """``2 n P(T- > n) P(X_1 > x)`` with the exact ladder probability."""
    return 2.0 * n * ladder_survival(n) * float(x_law.survival(x))


def ld_boundary(model_tag: str, params: dict, target: float) -> float:
    """Threshold ``x`` at which the model's validity ratio equals ``target``."""
    if not 0 < target < 1:
        raise ValueError("target must lie in (0, 1)")
    if model_tag in ("leapover", "leapover-fixed-t"):
        return params["t"] / target
    if model_tag == "gut":
        return (params["t"] / target) ** (1.0 / params["beta"])
    if model_tag in ("iid", "conditioned"):
        return (params["n"] / target) ** (1.0 / params["beta"])
    if model_tag in ("random-sum", "counting"):
        return (params["t"] ** params["gamma_x"] / target) ** (1.0 / params["beta"])
    raise ValueError(f"unknown model tag {model_tag!r}")


__all__ = [
    "LDPrediction",
    "Validity",
    "conditioned_prediction",
    "gamma",
    "gut_prediction",
    "iid_prediction",
    "ladder_survival",
    "ld_boundary",
    "leapover_fixed_t_prediction",
    "leapover_prediction",
    "log_gamma",
    "predict_conditioned",
    "predict_gut",
    "predict_iid",
    "predict_leapover",
    "predict_leapover_fixed_t",
    "predict_random_sum",
    "random_sum_prediction",
    "require_tail_scale",
    "upper_incomplete_gamma",
]
