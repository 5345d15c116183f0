import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ldwalks.asymptotics import ladder_survival
from ldwalks.processes import (
    BLOCK_SIZE,
    AbsValue,
    Additive,
    Identical,
    Independent,
    StepLimitExceeded,
    TailEstimate,
    deterministic_control,
    estimate_conditioned_tail,
    estimate_counting_cost_tail,
    estimate_iid_sum_tail,
    estimate_stopped_tail,
    run_blocks,
    sample_stopped,
    simulate_first_passage,
)
from ldwalks.renewal import build_kernel, mean_stopped_cost
from ldwalks.sampling import (
    Deterministic,
    Exponential,
    MittagLeffler,
    Pareto,
    Rademacher,
    RngStream,
    SymmetricPareto,
)
from ldwalks.stats import wilson_ci


def covers(est: TailEstimate, p: float, confidence: float = 0.999) -> bool:
    lo, hi = wilson_ci(est.successes, est.trials, confidence)
    return lo <= p <= hi


# -- models -------------------------------------------------------------------


def test_models_reject_signed_control():
    with pytest.raises(ValueError):
        Identical(SymmetricPareto(0.5))
    with pytest.raises(ValueError):
        Independent(Pareto(0.5), SymmetricPareto(0.5))
    with pytest.raises(ValueError):
        AbsValue(Pareto(0.5))


def test_first_passage_deterministic_walk(stream):
    out = simulate_first_passage(Identical(Deterministic(1.0)), 3.5, stream)
    assert (out.tau, out.cost, out.leapover) == (4, 4.0, pytest.approx(0.5))


def test_first_passage_at_zero_threshold():
    model = Independent(Pareto(0.5), Exponential(1.0))
    a = simulate_first_passage(model, 0.0, RngStream(4, 0))
    x, y = model.draw(RngStream(4, 0), 1)
    assert a.tau == 1 and a.cost == pytest.approx(y[0])


def test_step_cap():
    with pytest.raises(StepLimitExceeded):
        simulate_first_passage(Identical(Deterministic(1.0)), 100.0, RngStream(0, 0), max_steps=10)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**31), st.floats(0.0, 200.0))
def test_stopped_sample_validity(seed, t):
    model = Additive(Pareto(0.7), Exponential(1.0))
    tau, leap, cost = sample_stopped(model, t, 200, RngStream(seed, 0))
    assert np.all(tau >= 1)
    assert np.all(leap > 0)
    assert np.all(cost >= leap + t)  # cost = S_tau + sum W


def test_overshoot_brackets_threshold():
    # S_{tau-1} <= t < S_tau: replay the increments of one walk
    model = Identical(Pareto(0.5))
    t = 50.0
    out = simulate_first_passage(model, t, RngStream(11, 0))
    replay = RngStream(11, 0)
    path = np.cumsum([model.x_law.sample(replay, 1)[0] for _ in range(out.tau)])
    assert path[-1] > t and (out.tau == 1 or path[-2] <= t)
    assert path[-1] == pytest.approx(out.control_final)


def test_cost_monotone_in_threshold_under_common_numbers():
    model = Independent(Pareto(0.5), Exponential(1.0))
    costs = [simulate_first_passage(model, t, RngStream(21, 5)).cost for t in (0.0, 1.0, 10.0, 100.0, 1000.0)]
    assert costs == sorted(costs)


# -- estimators -------------------------------------------------------------------


def test_leapover_at_zero_is_first_jump():
    est = estimate_stopped_tail(Identical(Pareto(0.5)), 0.0, [4.0], 50_000, RngStream(1, 0), observable="leapover")
    assert covers(est[0], 0.5)


def test_estimates_nested_and_bounded():
    grid = np.geomspace(1.0, 1e6, 13)
    est = estimate_stopped_tail(Identical(Pareto(0.5)), 10.0, grid, 20_000, RngStream(2, 0))
    p = [e.p_hat for e in est]
    assert p == sorted(p, reverse=True)
    for e in est:
        assert 0 <= e.ci_low <= e.p_hat <= e.ci_high <= 1


def test_leapover_positive_exactly():
    est = estimate_stopped_tail(Identical(MittagLeffler(0.5)), 5.0, [0.0], 20_000, RngStream(3, 0),
                                observable="leapover")
    assert est[0].successes == est[0].trials


def test_grid_validation():
    with pytest.raises(ValueError):
        estimate_stopped_tail(Identical(Pareto(0.5)), 1.0, [], 10, RngStream())
    with pytest.raises(ValueError):
        estimate_stopped_tail(Identical(Pareto(0.5)), 1.0, [2.0, 1.0], 10, RngStream())


def test_unknown_observable():
    with pytest.raises(ValueError):
        estimate_stopped_tail(Identical(Pareto(0.5)), 1.0, [1.0], 10, RngStream(), observable="area")


def test_iid_single_step():
    est = estimate_iid_sum_tail(Pareto(0.5), 1, False, [4.0], 50_000, RngStream(5, 0))
    assert covers(est[0], 0.5)


def test_iid_centering_requires_mean():
    with pytest.raises(ValueError, match="finite mean"):
        estimate_iid_sum_tail(Pareto(0.5), 10, True, [1.0], 10, RngStream())


def test_iid_centering_exponential_sum():
    # sum of n Exp(1) minus n is Gamma(n) - n
    from scipy import stats

    n = 5
    est = estimate_iid_sum_tail(Exponential(1.0), n, True, [0.0, 2.0], 100_000, RngStream(6, 0))
    for e in est:
        assert covers(e, stats.gamma(n).sf(n + e.x))


def test_deterministic_control_reduces_to_iid_sum():
    control, t = deterministic_control(7)
    model = Independent(control, Pareto(0.5))
    tau, _, cost = sample_stopped(model, t, 1000, RngStream(9, 0))
    assert np.all(tau == 7)
    stopped = estimate_stopped_tail(model, t, [100.0, 1e4], 100_000, RngStream(9, 1))
    direct = estimate_iid_sum_tail(Pareto(0.5), 7, False, [100.0, 1e4], 100_000, RngStream(9, 2))
    for a, b in zip(stopped, direct):
        assert a.ci_low <= b.ci_high and b.ci_low <= a.ci_high


def test_counting_cost_examples():
    model = Independent(Pareto(0.5), Exponential(1.0))
    zero = estimate_counting_cost_tail(model, 0.0, [1e-9], 10_000, RngStream(1, 0))
    assert zero[0].successes == 0
    control, _ = deterministic_control(1)
    det = Independent(control, Exponential(1.0))
    # N(5.5) = 5 so the counting cost is Gamma(5)
    from scipy import stats

    est = estimate_counting_cost_tail(det, 5.5, [3.0, 6.0], 100_000, RngStream(1, 1))
    for e in est:
        assert covers(e, stats.gamma(5).sf(e.x))


def test_counting_cost_rejects_identical():
    with pytest.raises(ValueError):
        estimate_counting_cost_tail(Identical(Pareto(0.5)), 1.0, [1.0], 10, RngStream())


def test_counting_gap_is_independent_final_increment():
    # C_tau - C_{N(t)} = Y_tau, distributed as Y_1 and independent of N(t)
    from scipy import stats

    model = Independent(Pareto(0.5), Exponential(2.0))
    stream = RngStream(12, 0)
    tau, _, cost = sample_stopped(model, 100.0, 40_000, stream)
    est = estimate_stopped_tail(model, 100.0, [5.0, 50.0], 40_000, stream, observable="counting-cost")
    full = estimate_stopped_tail(model, 100.0, [5.0, 50.0], 40_000, stream)
    # same blocks, so the counting cost never exceeds the stopped cost
    for c, f in zip(est, full):
        assert c.successes <= f.successes
    # reconstruct the gap from the two samplers sharing one stream
    from ldwalks.processes import _first_passage_batch

    tau, _, c_full, c_prev = _first_passage_batch(model, 100.0, 40_000, RngStream(12, 9), 10**9)
    gap = c_full - c_prev
    assert stats.kstest(gap, stats.expon(scale=2.0).cdf).pvalue > 1e-4
    short, long_ = gap[tau <= np.median(tau)], gap[tau > np.median(tau)]
    assert stats.ks_2samp(short, long_).pvalue > 1e-4


def test_conditioned_single_step_identity():
    law = SymmetricPareto(0.5, 1.0)
    out = estimate_conditioned_tail(law, 1, [4.0, 100.0], 400_000, RngStream(7, 0))
    for e in out.estimates:
        assert covers(e, 0.5 * e.x**-0.5)
    assert abs(out.survivors / out.walks - 0.5) < 4 * math.sqrt(0.25 / out.walks)


def test_conditioned_rademacher_enumeration():
    # only (+1, +1) survives two steps; its path length 2 exceeds x = 1
    out = estimate_conditioned_tail(Rademacher(), 2, [1.0], 200_000, RngStream(8, 0))
    assert covers(out.estimates[0], 0.25)
    assert out.survivors == out.estimates[0].successes


def test_conditioned_survival_rate_sparre_andersen():
    n = 20
    out = estimate_conditioned_tail(SymmetricPareto(0.5), n, [1.0], 300_000, RngStream(10, 0))
    lo, hi = wilson_ci(out.survivors, out.walks, 0.999)
    assert lo <= ladder_survival(n) <= hi


def test_conditioned_requires_symmetric_law():
    with pytest.raises(ValueError):
        estimate_conditioned_tail(Pareto(0.5), 3, [1.0], 10, RngStream())


# -- determinism ------------------------------------------------------------------


def test_worker_count_does_not_change_counts():
    model = Identical(Pareto(0.5))
    trials = 2 * BLOCK_SIZE + 123
    one = estimate_stopped_tail(model, 10.0, [10.0, 1e3], trials, RngStream(42, 0), workers=1)
    two = estimate_stopped_tail(model, 10.0, [10.0, 1e3], trials, RngStream(42, 0), workers=2)
    assert [e.successes for e in one] == [e.successes for e in two]
    c1 = estimate_conditioned_tail(SymmetricPareto(0.5), 5, [1.0], trials, RngStream(1, 1), workers=1)
    c3 = estimate_conditioned_tail(SymmetricPareto(0.5), 5, [1.0], trials, RngStream(1, 1), workers=3)
    assert c1 == c3


def test_sample_stopped_worker_independent():
    model = Independent(Exponential(1.0), Pareto(0.5))
    a = sample_stopped(model, 5.0, BLOCK_SIZE + 7, RngStream(3, 2), workers=1)
    b = sample_stopped(model, 5.0, BLOCK_SIZE + 7, RngStream(3, 2), workers=2)
    for u, v in zip(a, b):
        assert np.array_equal(u, v)


def test_run_blocks_partition():
    sizes = run_blocks(lambda size, stream: np.array([size, 1]), 3 * BLOCK_SIZE + 5, RngStream())
    assert sizes.tolist() == [3 * BLOCK_SIZE + 5, 4]
    with pytest.raises(ValueError):
        run_blocks(lambda size, stream: 0, 0, RngStream())


# -- mean first-passage time against the renewal solver ---------------------------------


def test_mean_tau_matches_renewal_solver():
    # E tau(t) for Pareto control: unit costs make C_tau = tau
    t = 1000.0
    law = Pareto(0.5)
    model = Independent(law, Deterministic(1.0))
    tau, _, _ = sample_stopped(model, t, 100_000, RngStream(17, 0))
    solver = mean_stopped_cost(lambda s: build_kernel(model, s), t, dt=0.05)
    se = tau.std(ddof=1) / math.sqrt(tau.size)
    assert abs(tau.mean() - solver) < 5 * se
    assert solver == pytest.approx(tau.mean(), rel=0.02)
