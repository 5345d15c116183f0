"""Simulators for the control-cost walk (S_n, C_n).

Every estimator partitions its trials into fixed blocks of ``BLOCK_SIZE``.
Block ``b`` draws from ``stream.substream(b)`` whatever the worker count, and
per-block exceedance counts are merged by addition, so results are
bit-identical for any number of workers.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from functools import partial
from typing import NamedTuple

import numpy as np

from .sampling import Deterministic, RngStream, TailLaw
from .stats import wilson_ci

BLOCK_SIZE = 1 << 16
DEFAULT_MAX_STEPS = 10**9


class StepLimitExceeded(RuntimeError):
    """A walk did not cross its threshold within the step cap."""


# -- coupling models ---------------------------------------------------------


def _require_positive(law: TailLaw, role: str):
    if not law.positive:
        raise ValueError(f"{role} law {law!r} must have support in [0, inf)")


@dataclass(frozen=True)
class Independent:
    """Cost increments independent of control increments."""

    x_law: TailLaw
    y_law: TailLaw

    def __post_init__(self):
        _require_positive(self.x_law, "control")
        _require_positive(self.y_law, "cost")

    def draw(self, stream: RngStream, size: int):
        x = self.x_law.sample(stream, size)
        return x, self.y_law.sample(stream, size)


@dataclass(frozen=True)
class Identical:
    """Cost increment equals control increment (leapover model)."""

    x_law: TailLaw

    def __post_init__(self):
        _require_positive(self.x_law, "control")

    def draw(self, stream: RngStream, size: int):
        x = self.x_law.sample(stream, size)
        return x, x


@dataclass(frozen=True)
class Additive:
    """Cost increment ``X + W`` with ``W`` independent of ``X``."""

    x_law: TailLaw
    w_law: TailLaw

    def __post_init__(self):
        _require_positive(self.x_law, "control")
        _require_positive(self.w_law, "additive")

    def draw(self, stream: RngStream, size: int):
        x = self.x_law.sample(stream, size)
        return x, x + self.w_law.sample(stream, size)


@dataclass(frozen=True)
class AbsValue:
    """Symmetric control increments with cost ``|X|``."""

    x_law: TailLaw

    def __post_init__(self):
        if not self.x_law.symmetric:
            raise ValueError("AbsValue requires a symmetric control law")

    def draw(self, stream: RngStream, size: int):
        x = self.x_law.sample(stream, size)
        return x, np.abs(x)


CouplingModel = Independent | Identical | Additive | AbsValue


# -- samples and estimates ---------------------------------------------------


class StoppedSample(NamedTuple):
    tau: int
    control_final: float
    cost: float
    leapover: float


@dataclass(frozen=True)
class TailEstimate:
    x: float
    successes: int
    trials: int
    ci_low: float
    ci_high: float

    @property
    def p_hat(self) -> float:
        return self.successes / self.trials

    @classmethod
    def from_counts(cls, x, successes, trials, confidence=0.95):
        lo, hi = wilson_ci(int(successes), int(trials), confidence)
        return cls(float(x), int(successes), int(trials), lo, hi)


@dataclass(frozen=True)
class ConditionedEstimate:
    survivors: int
    walks: int
    estimates: list[TailEstimate]


def _check_grid(x_grid):
    grid = np.asarray(x_grid, dtype=float)
    if grid.ndim != 1 or grid.size == 0:
        raise ValueError("x_grid must be a non-empty 1-d sequence")
    if np.any(np.diff(grid) <= 0):
        raise ValueError("x_grid must be strictly ascending")
    return grid


def _exceedances(values: np.ndarray, grid: np.ndarray) -> np.ndarray:
    """Counts of ``values > x`` for each x in the ascending grid."""
    below = np.searchsorted(np.sort(values), grid, side="right")
    return values.size - below


# -- block runner ------------------------------------------------------------


def _block_sizes(trials: int):
    full, rest = divmod(trials, BLOCK_SIZE)
    return [BLOCK_SIZE] * full + ([rest] if rest else [])


def _run_block(task, stream, index_size):
    index, size = index_size
    return task(size, stream.substream(index))


def run_blocks(task, trials: int, stream: RngStream, workers: int | None = 1) -> np.ndarray:
    """Sum ``task(size, substream)`` over the fixed block partition of ``trials``."""
    if trials < 1:
        raise ValueError("trials must be >= 1")
    blocks = list(enumerate(_block_sizes(trials)))
    workers = workers or os.cpu_count() or 1
    job = partial(_run_block, task, stream)
    if workers == 1 or len(blocks) == 1:
        parts = map(job, blocks)
        return sum(parts)
    with ProcessPoolExecutor(max_workers=min(workers, len(blocks))) as pool:
        return sum(pool.map(job, blocks))


# -- first passage -----------------------------------------------------------


def _first_passage_batch(model, t: float, size: int, stream: RngStream, max_steps: int):
    if isinstance(model, AbsValue):
        raise ValueError("first passage needs non-negative control increments")
    control = np.zeros(size)
    cost = np.zeros(size)
    prev_cost = np.zeros(size)
    tau = np.zeros(size, dtype=np.int64)
    active = np.arange(size)
    steps = 0
    while active.size:
        steps += 1
        if steps > max_steps:
            raise StepLimitExceeded(
                f"{active.size} walk(s) still below t={t} after {max_steps} steps under {model!r}"
            )
        x, y = model.draw(stream, active.size)
        control[active] += x
        prev_cost[active] = cost[active]
        cost[active] += y
        tau[active] = steps
        active = active[control[active] <= t]
    return tau, control, cost, prev_cost


def simulate_first_passage(model, t: float, stream: RngStream, max_steps: int = DEFAULT_MAX_STEPS) -> StoppedSample:
    """Run one walk until the control first exceeds ``t``.

    Increments are drawn one step at a time, so two calls on equal streams
    consume the same increment sequence and are coupled across ``t``.
    """
    if t < 0:
        raise ValueError("threshold must be non-negative")
    tau, control, cost, _ = _first_passage_batch(model, t, 1, stream, max_steps)
    return StoppedSample(int(tau[0]), float(control[0]), float(cost[0]), float(control[0] - t))


def _collect_block(model, t, max_steps, stream, index_size):
    index, size = index_size
    tau, control, cost, _ = _first_passage_batch(model, t, size, stream.substream(index), max_steps)
    return tau, control - t, cost


def sample_stopped(model, t: float, trials: int, stream: RngStream, *, workers: int | None = 1,
                   max_steps: int = DEFAULT_MAX_STEPS):
    """Arrays ``(tau, leapover, cost)`` for ``trials`` walks, in block order."""
    if trials < 1:
        raise ValueError("trials must be >= 1")
    blocks = list(enumerate(_block_sizes(trials)))
    job = partial(_collect_block, model, float(t), max_steps, stream)
    workers = workers or os.cpu_count() or 1
    if workers == 1 or len(blocks) == 1:
        parts = list(map(job, blocks))
    else:
        with ProcessPoolExecutor(max_workers=min(workers, len(blocks))) as pool:
            parts = list(pool.map(job, blocks))
    return tuple(np.concatenate(cols) for cols in zip(*parts))


def _stopped_task(model, t, grid, observable, max_steps, size, stream):
    tau, control, cost, prev_cost = _first_passage_batch(model, t, size, stream, max_steps)
    if observable == "cost":
        values = cost
    elif observable == "leapover":
        values = control - t
    elif observable == "counting-cost":
        values = prev_cost
    elif observable == "tau":
        values = tau.astype(float)
    else:
        raise ValueError(f"unknown observable {observable!r}")
    return _exceedances(values, grid)


def estimate_stopped_tail(
    model,
    t: float,
    x_grid,
    trials: int,
    stream: RngStream,
    *,
    observable: str = "cost",
    confidence: float = 0.95,
    workers: int | None = 1,
    max_steps: int = DEFAULT_MAX_STEPS,
) -> list[TailEstimate]:
    """Estimate ``P(Z > x)`` over ``x_grid`` for the stopped walk.

    ``observable`` selects Z: the stopped cost ``C_tau`` (default), the
    leapover ``S_tau - t``, the counting-process cost ``C_{tau-1}``, or ``tau``.
    """
    grid = _check_grid(x_grid)
    task = partial(_stopped_task, model, float(t), grid, observable, max_steps)
    counts = run_blocks(task, trials, stream, workers)
    return [TailEstimate.from_counts(x, c, trials, confidence) for x, c in zip(grid, counts)]


def estimate_counting_cost_tail(model: Independent, t, x_grid, trials, stream, **kwargs) -> list[TailEstimate]:
    """Estimate ``P(C_{N(t)} > x)`` where ``N(t) = tau(t) - 1``."""
    if not isinstance(model, Independent):
        raise ValueError("counting-process cost is defined for the Independent model")
    return estimate_stopped_tail(model, t, x_grid, trials, stream, observable="counting-cost", **kwargs)


# -- i.i.d. sums -------------------------------------------------------------

_ROW_BUDGET = 1 << 21  # increments materialised per chunk


def _iid_task(y_law, n, shift, grid, size, stream):
    counts = np.zeros(grid.size, dtype=np.int64)
    rows = max(1, _ROW_BUDGET // n)
    for start in range(0, size, rows):
        m = min(rows, size - start)
        sums = y_law.sample(stream, (m, n)).sum(axis=1) - shift
        counts += _exceedances(sums, grid)
    return counts


def estimate_iid_sum_tail(
    y_law: TailLaw,
    n: int,
    center: bool,
    x_grid,
    trials: int,
    stream: RngStream,
    *,
    confidence: float = 0.95,
    workers: int | None = 1,
) -> list[TailEstimate]:
    """Estimate ``P(sum_{k<=n} (Y_k - center*mean) > x)``."""
    if n < 1:
        raise ValueError("n must be >= 1")
    shift = 0.0
    if center:
        mean = y_law.mean
        if not math.isfinite(mean):
            raise ValueError(f"centering requires a finite mean; {y_law!r} has none")
        shift = n * mean
    grid = _check_grid(x_grid)
    counts = run_blocks(partial(_iid_task, y_law, n, shift, grid), trials, stream, workers)
    return [TailEstimate.from_counts(x, c, trials, confidence) for x, c in zip(grid, counts)]


# -- walks conditioned to stay positive --------------------------------------


def _conditioned_task(x_law, n, grid, size, stream):
    position = np.zeros(size)
    length = np.zeros(size)
    for _ in range(n):
        x = x_law.sample(stream, position.size)
        position += x
        length += np.abs(x)
        alive = position > 0.0
        position = position[alive]
        length = length[alive]
        if not position.size:
            break
    out = np.empty(grid.size + 1, dtype=np.int64)
    out[0] = position.size
    out[1:] = _exceedances(length, grid)
    return out


def estimate_conditioned_tail(
    x_law: TailLaw,
    n: int,
    x_grid,
    walks: int,
    stream: RngStream,
    *,
    confidence: float = 0.95,
    workers: int | None = 1,
) -> ConditionedEstimate:
    """Estimate the joint probability ``P(C_n > x, S_1 > 0, ..., S_n > 0)``.

    ``C_n`` is the total path length ``sum |X_k|``.  Estimates are normalised
    by the number of walks, not by the survivors.
    """
    if not x_law.symmetric:
        raise ValueError("conditioned walks need a symmetric control law")
    if n < 1:
        raise ValueError("n must be >= 1")
    grid = _check_grid(x_grid)
    counts = run_blocks(partial(_conditioned_task, x_law, n, grid), walks, stream, workers)
    estimates = [TailEstimate.from_counts(x, c, walks, confidence) for x, c in zip(grid, counts[1:])]
    return ConditionedEstimate(int(counts[0]), walks, estimates)


def deterministic_control(n: int) -> tuple[Deterministic, float]:
    """Unit control law and a threshold giving ``tau = n`` exactly."""
    return Deterministic(1.0), n - 0.5


__all__ = [
    "AbsValue",
    "Additive",
    "BLOCK_SIZE",
    "ConditionedEstimate",
    "CouplingModel",
    "Identical",
    "Independent",
    "StepLimitExceeded",
    "StoppedSample",
    "TailEstimate",
    "estimate_conditioned_tail",
    "estimate_counting_cost_tail",
    "estimate_iid_sum_tail",
    "estimate_stopped_tail",
    "run_blocks",
    "sample_stopped",
    "simulate_first_passage",
]
