import math

import numpy as np
import pytest
from scipy import integrate

from ldwalks.processes import AbsValue, Additive, Identical, Independent, StepLimitExceeded, sample_stopped
from ldwalks.renewal import RenewalKernel, build_kernel, grid_convergence, solve
from ldwalks.sampling import (
    Deterministic,
    Exponential,
    MittagLeffler,
    Pareto,
    RngStream,
    SymmetricPareto,
    TruncatedPareto,
)
from ldwalks.transforms import empirical_laplace


def ml_half_transform(s, t):
    """E exp(-s C) for the leapover model with Mittag-Leffler(1/2) increments."""
    r = math.sqrt(s)
    return 1.0 - r / (1.0 + r) * (1.0 + math.erf(math.sqrt(s * t)) / r)


MODELS = [
    Identical(Exponential(1.0)),
    Identical(Pareto(0.5)),
    Identical(MittagLeffler(0.5)),
    Identical(TruncatedPareto(0.5, 8.0)),
    Independent(Pareto(0.5), Pareto(0.5)),
    Independent(MittagLeffler(0.3), Exponential(2.0)),
    Additive(Exponential(1.0), Pareto(0.5)),
    Additive(Pareto(0.7, 0.5), Exponential(1.0)),
]


def test_kernel_examples():
    k = build_kernel(Identical(Exponential(1.0)), 0.0)
    x = np.array([0.0, 0.5, 3.0])
    assert k.k(x) == pytest.approx(np.exp(-x))
    for t in (0.0, 0.5, 3.0):
        assert k.q(t) == pytest.approx(math.exp(-t), rel=1e-14)
    kp = build_kernel(Identical(Pareto(0.5)), 0.3)
    assert np.all(kp.k(np.array([0.0, 0.5, 0.999])) == 0.0)


@pytest.mark.parametrize("t", [0.0, 0.5, 3.0])
def test_additive_source_matches_quadrature(t):
    k = build_kernel(Additive(Exponential(1.0), Pareto(0.5)), 1.0)
    val, _ = integrate.quad(lambda x: float(k.k(x)), t, np.inf, epsabs=1e-14)
    assert k.q(t) == pytest.approx(val, abs=1e-8)
    assert k.q(t) == pytest.approx(Pareto(0.5).laplace(1.0) * math.exp(-2 * t) / 2, rel=1e-12)


@pytest.mark.parametrize("model", MODELS, ids=repr)
def test_kernel_source_consistency(model):
    k = build_kernel(model, 0.2)
    assert k.q(0.0) == pytest.approx(k.total_mass, rel=1e-12)
    assert k.total_mass <= 1.0
    ts = np.linspace(0.0, 6.0, 13)
    qs = [k.q(t) for t in ts]
    assert all(a >= b - 1e-15 for a, b in zip(qs, qs[1:]))
    lo = 1.5
    val, _ = integrate.quad(lambda x: float(k.k(x)), lo, 4.0, epsabs=1e-13, limit=200,
                            points=[p for p in model.x_law.breakpoints if lo < p < 4.0] or None)
    assert k.q(lo) - k.q(4.0) == pytest.approx(val, rel=1e-7, abs=1e-12)


def test_kernel_rejections():
    with pytest.raises(ValueError):
        build_kernel(AbsValue(SymmetricPareto(0.5)), 1.0)
    with pytest.raises(ValueError):
        build_kernel(Identical(Deterministic(1.0)), 1.0)
    with pytest.raises(ValueError):
        build_kernel(Identical(Pareto(0.5)), -1.0)


@pytest.mark.parametrize("model", MODELS, ids=repr)
def test_conservation_at_zero(model):
    curve = solve(build_kernel(model, 0.0), 20.0, 0.02)
    assert np.max(np.abs(curve.values - 1.0)) <= 1e-8
    assert curve.clamped == 0


@pytest.mark.parametrize("model", MODELS, ids=repr)
def test_monotone_in_t(model):
    curve = solve(build_kernel(model, 0.5), 20.0, 0.02)
    assert np.all(np.diff(curve.values) <= 1e-10)
    assert np.all((curve.values >= 0) & (curve.values <= 1))


def test_mittag_leffler_oracle_value():
    curve = solve(build_kernel(Identical(MittagLeffler(0.5)), 1.0), 1.0, 1e-3)
    assert ml_half_transform(1.0, 1.0) == pytest.approx(0.0786495, abs=1.5e-7)
    assert abs(curve.values[-1] - 0.0786495) < 1e-3
    assert curve.values[-1] == pytest.approx(ml_half_transform(1.0, 1.0), abs=1e-5)


@pytest.mark.parametrize("s", [0.01, 0.3, 4.0])
def test_mittag_leffler_oracle_curve(s):
    curve = solve(build_kernel(Identical(MittagLeffler(0.5)), s), 10.0, 5e-3)
    for t in (0.5, 2.0, 10.0):
        assert curve.at(t) == pytest.approx(ml_half_transform(s, t), abs=2e-4)


@pytest.mark.parametrize("model", [Identical(Exponential(1.0)), Identical(Pareto(0.5)),
                                   Additive(Exponential(1.0), Pareto(0.5))], ids=repr)
def test_grid_convergence_smooth(model):
    assert grid_convergence(build_kernel(model, 0.3), 10.0, 0.05) >= 1.8


def test_grid_convergence_mittag_leffler():
    assert grid_convergence(build_kernel(Identical(MittagLeffler(0.5)), 1.0), 2.0, 0.02) >= 1.8


def test_exponential_exact_solution():
    # Identical Exp(1): cost is S_tau, h_t(s) = exp(-s t) / (1 + s) by memorylessness
    s = 0.7
    curve = solve(build_kernel(Identical(Exponential(1.0)), s), 5.0, 0.01)
    expected = np.exp(-s * curve.t_grid) / (1 + s)
    assert np.max(np.abs(curve.values - expected)) < 1e-5


def test_solver_against_monte_carlo_pareto():
    model = Identical(Pareto(0.5))
    s, t = 0.01, 50.0
    _, _, cost = sample_stopped(model, t, 1_000_000, RngStream(77, 0))
    mean, se = empirical_laplace(cost, s)
    value = solve(build_kernel(model, s), t, 0.01).values[-1]
    assert abs(value - mean) < 5 * se


def test_step_cap_and_coarse_grid():
    k = build_kernel(Identical(Exponential(1.0)), 1.0)
    with pytest.raises(StepLimitExceeded):
        solve(k, 1e8, 1.0)
    with pytest.raises(ValueError):
        solve(k, 1.0, 0.0)
    heavy = RenewalKernel(Exponential(1.0), 0.0, 0.0, 3.0)
    with pytest.raises(ValueError, match="too coarse"):
        solve(heavy, 40.0, 10.0)
