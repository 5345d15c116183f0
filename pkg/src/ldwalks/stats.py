"""Binomial intervals, ratio reports against predictions, Hill estimator."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from statistics import NormalDist

import numpy as np


def wilson_ci(successes: int, trials: int, confidence: float = 0.95) -> tuple[float, float]:
    """Wilson score interval for a binomial proportion."""
    if trials < 1:
        raise ValueError("trials must be >= 1")
    if not 0 <= successes <= trials:
        raise ValueError("successes must lie in [0, trials]")
    if not 0 < confidence < 1:
        raise ValueError("confidence must lie in (0, 1)")
    z = NormalDist().inv_cdf(0.5 + confidence / 2.0)
    z2 = z * z
    p = successes / trials
    denom = trials + z2
    center = (successes + z2 / 2.0) / denom
    half = z / denom * math.sqrt(trials * p * (1.0 - p) + z2 / 4.0)
    low = 0.0 if successes == 0 else max(0.0, center - half)
    high = 1.0 if successes == trials else min(1.0, center + half)
    return low, high


def _fmt(value):
    return repr(float(value)) if isinstance(value, float) else value


REPORT_COLUMNS = (
    "kind",
    "t_or_n",
    "x",
    "successes",
    "trials",
    "p_hat",
    "ci_low",
    "ci_high",
    "predicted",
    "ratio",
    "validity_ratio",
    "verdict",
)


@dataclass(frozen=True)
class RatioRow:
    kind: str
    t_or_n: float
    x: float
    successes: int
    trials: int
    p_hat: float
    ci_low: float
    ci_high: float
    predicted: float
    ratio: float
    ratio_ci: tuple[float, float]
    validity_ratio: float
    verdict: str


@dataclass
class RatioReport:
    rows: list[RatioRow] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return bool(self.rows) and all(r.verdict == "PASS" for r in self.rows)

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(REPORT_COLUMNS)
        for r in self.rows:
            writer.writerow([_fmt(getattr(r, c)) for c in REPORT_COLUMNS])
        return buf.getvalue()


def ratio_report(
    estimates,
    prediction,
    t_or_n: float,
    tolerance: float = 0.1,
    validity_gate: float = 0.1,
    kind: str | None = None,
) -> RatioReport:
    """Compare Monte Carlo tail estimates with a prediction.

    A row passes when ``[ci_low, ci_high] / predicted``, widened by
    ``tolerance`` on each side, contains 1 and the prediction's validity
    ratio at ``(t_or_n, x)`` is below ``validity_gate``.
    """
    kind = kind or prediction.model_tag
    rows = []
    for est in sorted(estimates, key=lambda e: e.x):
        predicted = prediction.evaluate(t_or_n, est.x)
        validity = prediction.validity_ratio(t_or_n, est.x)
        if predicted <= 0:
            ratio, ratio_ci, verdict = math.nan, (math.nan, math.nan), "N/A"
        else:
            ratio = est.p_hat / predicted
            ratio_ci = (est.ci_low / predicted, est.ci_high / predicted)
            covered = ratio_ci[0] - tolerance <= 1.0 <= ratio_ci[1] + tolerance
            verdict = "PASS" if covered and validity < validity_gate else "FAIL"
        rows.append(
            RatioRow(kind, float(t_or_n), est.x, est.successes, est.trials, est.p_hat,
                     est.ci_low, est.ci_high, predicted, ratio, ratio_ci, validity, verdict)
        )
    return RatioReport(rows)


def hill_estimator(samples, k: int) -> float:
    """Hill estimate of the tail index from the top ``k`` order statistics."""
    x = np.asarray(samples, dtype=float)
    if k < 2:
        raise ValueError("k must be >= 2")
    if k >= x.size:
        raise ValueError("k must be smaller than the sample count")
    if np.any(x <= 0):
        raise ValueError("samples must be positive")
    top = np.sort(x)[-(k + 1):]
    mean_log_spacing = np.mean(np.log(top[1:] / top[0]))
    if mean_log_spacing <= 0:
        raise ValueError("top order statistics are tied; tail index undefined")
    return float(1.0 / mean_log_spacing)
