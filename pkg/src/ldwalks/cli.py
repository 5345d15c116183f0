"""Command-line experiment harness.

Subcommands: ``run``, ``predict``, ``sample``, ``hypothesis`` and
``renewal-check``.  Exit codes: 0 all verdicts pass, 1 some verdict fails,
2 configuration error, 3 resource cap hit.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import math
import os
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Literal

from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from . import asymptotics as asy
from .processes import (
    DEFAULT_MAX_STEPS,
    AbsValue,
    Additive,
    Identical,
    Independent,
    StepLimitExceeded,
    estimate_conditioned_tail,
    estimate_iid_sum_tail,
    estimate_stopped_tail,
    sample_stopped,
)
from .renewal import build_kernel, solve
from .sampling import MittagLeffler, RngStream, TailLaw, law_from_dict
from .stats import REPORT_COLUMNS, RatioReport, ratio_report
from .transforms import (
    HypothesisParams,
    check_hypothesis,
    check_window_hypothesis,
    empirical_laplace,
    generating_transform_conditioned,
    power_rule,
)

EXIT_PASS, EXIT_FAIL, EXIT_CONFIG, EXIT_RESOURCE = 0, 1, 2, 3

ESTIMATE_COLUMNS = ("kind", "t_or_n", "x", "successes", "trials", "p_hat", "ci_low", "ci_high")
HYPOTHESIS_COLUMNS = ("lambda", "grid_size", "sup_deviation", "argmax_s")
WINDOW_COLUMNS = ("t", "grid_size", "sup_deviation", "argmax_s")
CURVE_COLUMNS = ("s", "t", "value")
RENEWAL_COLUMNS = ("s", "t", "solver", "mc_mean", "mc_se", "z_score", "verdict")

Kind = Literal[
    "iid", "random-sum", "leapover", "gut", "conditioned", "counting", "renewal-check", "hypothesis", "window"
]


class ConfigError(ValueError):
    pass


# -- configuration --------------------------------------------------------------


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid")


class ModelSpec(_Strict):
    coupling: Literal["independent", "identical", "additive", "abs-value", "iid"]
    x_law: dict[str, Any] | None = None
    y_law: dict[str, Any] | None = None
    w_law: dict[str, Any] | None = None

    @field_validator("x_law", "y_law", "w_law")
    @classmethod
    def _law_builds(cls, v):
        if v is not None:
            law_from_dict(v)
        return v

    @model_validator(mode="after")
    def _laws_present(self):
        needed = {
            "independent": ("x_law", "y_law"),
            "identical": ("x_law",),
            "additive": ("x_law", "w_law"),
            "abs-value": ("x_law",),
            "iid": ("y_law",),
        }[self.coupling]
        for name in needed:
            if getattr(self, name) is None:
                raise ValueError(f"coupling {self.coupling!r} needs {name}")
        for name in {"x_law", "y_law", "w_law"} - set(needed):
            if getattr(self, name) is not None:
                raise ValueError(f"coupling {self.coupling!r} takes no {name}")
        self.build()
        return self

    def law(self, name) -> TailLaw:
        return law_from_dict(getattr(self, name))

    def build(self):
        if self.coupling == "independent":
            return Independent(self.law("x_law"), self.law("y_law"))
        if self.coupling == "identical":
            return Identical(self.law("x_law"))
        if self.coupling == "additive":
            return Additive(self.law("x_law"), self.law("w_law"))
        if self.coupling == "abs-value":
            return AbsValue(self.law("x_law"))
        return None


class BoundaryGrid(_Strict):
    targets: list[float] = Field(min_length=1)


class HypothesisSpec(_Strict):
    alpha: float
    gamma: float
    s_exponent: float
    s_scale: float = 1.0
    theta: float = 1.0
    lambda_grid: list[float] = Field(min_length=1)
    ell_s_const: float = 1.0
    L_const: float = 1.0
    points: int = 64
    tolerance: float = 0.05


class WindowSpec(_Strict):
    beta: float
    t_grid: list[float] = Field(min_length=1)
    s_star_exponent: float = -0.5
    s_exponent: float = -0.25
    theta: float = 1.0
    points: int = 64
    tolerance: float = 0.1


class RenewalSpec(_Strict):
    s: list[float] = Field(min_length=1)
    dt: float = Field(gt=0)
    se_multiplier: float = Field(default=5.0, gt=0)


_NEEDS_MODEL = {"iid", "random-sum", "leapover", "gut", "conditioned", "counting", "renewal-check", "hypothesis"}
_NEEDS_GRID = {"iid", "random-sum", "leapover", "gut", "conditioned", "counting"}
_COUPLING_FOR = {
    "iid": {"iid"},
    "random-sum": {"independent"},
    "counting": {"independent"},
    "leapover": {"identical"},
    "gut": {"additive"},
    "conditioned": {"abs-value"},
    "renewal-check": {"independent", "identical", "additive"},
    "hypothesis": {"independent", "identical", "additive", "abs-value"},
}


class ExperimentConfig(_Strict):
    kind: Kind
    model: ModelSpec | None = None
    t_or_n: list[float] = Field(default_factory=list)
    x_grid: list[float] | BoundaryGrid | None = None
    trials: int = Field(default=100_000, gt=0)
    seed: int = Field(default=0, ge=0)
    workers: int | None = Field(default=None, gt=0)
    confidence: float = Field(default=0.95, gt=0, lt=1)
    tolerance: float = Field(default=0.1, ge=0)
    validity_gate: float = Field(default=0.1, gt=0)
    output: str | None = None
    centered: bool = False
    fixed_t: bool = False
    max_steps: int = Field(default=DEFAULT_MAX_STEPS, gt=0)
    hypothesis: HypothesisSpec | None = None
    window: WindowSpec | None = None
    renewal: RenewalSpec | None = None

    @field_validator("x_grid")
    @classmethod
    def _grid_shape(cls, v):
        if isinstance(v, list):
            if not v:
                raise ValueError("x_grid must not be empty")
            if any(b <= a for a, b in zip(v, v[1:])):
                raise ValueError("x_grid must be strictly ascending")
        return v

    @model_validator(mode="after")
    def _sections(self):
        k = self.kind
        if k in _NEEDS_MODEL:
            if self.model is None:
                raise ValueError(f"kind {k!r} needs a model")
            if self.model.coupling not in _COUPLING_FOR[k]:
                raise ValueError(f"kind {k!r} needs coupling in {sorted(_COUPLING_FOR[k])}")
        if k in _NEEDS_GRID and self.x_grid is None:
            raise ValueError(f"kind {k!r} needs x_grid")
        if k in _NEEDS_GRID | {"renewal-check"} and not self.t_or_n:
            raise ValueError(f"kind {k!r} needs a non-empty t_or_n list")
        for section, owner in (("hypothesis", "hypothesis"), ("window", "window"), ("renewal", "renewal-check")):
            present = getattr(self, section) is not None
            if present != (k == owner):
                raise ValueError(f"section {section!r} is {'required' if not present else 'only allowed'} for kind {owner!r}")
        if self.fixed_t and k != "leapover":
            raise ValueError("fixed_t applies to kind 'leapover' only")
        if self.centered and k != "iid":
            raise ValueError("centered applies to kind 'iid' only")
        return self


def load_config(path) -> ExperimentConfig:
    try:
        raw = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    try:
        return ExperimentConfig.model_validate(raw)
    except ValidationError as exc:
        raise ConfigError(_format_validation(exc)) from None


def _format_validation(exc: ValidationError) -> str:
    lines = []
    for err in exc.errors():
        where = ".".join(str(p) for p in err["loc"]) or "<root>"
        lines.append(f"{where}: {err['msg']}")
    return "invalid config:\n  " + "\n  ".join(lines)


def config_digest(config: ExperimentConfig) -> str:
    """SHA-256 of the config minus fields that must not change the results."""
    payload = config.model_dump(mode="json", exclude={"workers", "output"})
    text = json.dumps(payload, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(text.encode()).hexdigest()


# -- experiment kinds -----------------------------------------------------------


@dataclass
class RunResult:
    kind: str
    passed: bool
    summary: str
    tables: dict[str, tuple[tuple[str, ...], list[tuple]]] = field(default_factory=dict)
    extra: dict[str, Any] = field(default_factory=dict)

    @property
    def exit_code(self) -> int:
        return EXIT_PASS if self.passed else EXIT_FAIL


def _rate_law(law: TailLaw):
    """``(gamma, c)`` with ``1 - laplace(lam) ~ c * lam**gamma``."""
    scale = law.tail_scale()
    if scale is not None and 0 < scale.beta < 1:
        return scale.beta, scale.ell_const
    if math.isfinite(law.mean):
        return 1.0, law.mean
    raise ConfigError(f"control law {law!r} has neither a finite mean nor a tail index in (0, 1)")


def _tail(law: TailLaw):
    try:
        return asy.require_tail_scale(law)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def _prediction(config: ExperimentConfig, t: float):
    """``(LDPrediction, boundary tag, boundary params)`` for a Monte Carlo kind."""
    m = config.model
    k = config.kind
    if k == "iid":
        ts = _tail(m.law("y_law"))
        pred = asy.iid_prediction(ts.beta, ts.ell_const, config.centered)
        return pred, "iid", {"n": t, "beta": ts.beta}
    if k in ("random-sum", "counting"):
        ts = _tail(m.law("y_law"))
        gx, cx = _rate_law(m.law("x_law"))
        pred = asy.random_sum_prediction(ts.beta, ts.ell_const, gx, cx)
        return pred, k, {"t": t, "beta": ts.beta, "gamma_x": gx}
    if k == "leapover":
        x = m.law("x_law")
        beta = _tail(x).beta
        if config.fixed_t:
            if not isinstance(x, MittagLeffler):
                raise ConfigError("fixed_t predictions need a Mittag-Leffler control law")
            return asy.leapover_fixed_t_prediction(beta, t), "leapover-fixed-t", {"t": t}
        return asy.leapover_prediction(beta), "leapover", {"t": t}
    if k == "gut":
        x = m.law("x_law")
        if not math.isfinite(x.mean):
            raise ConfigError("gut experiments need a control law with finite mean")
        ts = _tail(m.law("w_law"))
        return asy.gut_prediction(ts.beta, ts.ell_const, x.mean), "gut", {"t": t, "beta": ts.beta}
    if k == "conditioned":
        x = m.law("x_law")
        if not hasattr(x, "magnitude") or x.magnitude.tail_scale() is None:
            raise ConfigError("conditioned experiments need a symmetric Pareto control law")
        n = _as_count(t)
        return asy.conditioned_prediction(x, n), "conditioned", {"n": n, "beta": x.beta}
    raise AssertionError(k)


def _as_count(t) -> int:
    if t != int(t) or t < 1:
        raise ConfigError(f"step count must be a positive integer, got {t}")
    return int(t)


def _grid_for(config, tag, params):
    if isinstance(config.x_grid, BoundaryGrid):
        try:
            return sorted({asy.ld_boundary(tag, params, target) for target in config.x_grid.targets})
        except (KeyError, ValueError) as exc:
            raise ConfigError(f"x_grid targets: {exc}") from None
    return list(config.x_grid)


def _run_monte_carlo(config: ExperimentConfig, workers) -> RunResult:
    k = config.kind
    model = config.model.build()
    all_rows = []
    estimate_rows = []
    extra = {}
    for index, t in enumerate(config.t_or_n):
        pred, tag, params = _prediction(config, t)
        grid = _grid_for(config, tag, params)
        stream = RngStream(config.seed, index)
        common = dict(confidence=config.confidence, workers=workers)
        if k == "iid":
            est = estimate_iid_sum_tail(config.model.law("y_law"), _as_count(t), config.centered, grid,
                                        config.trials, stream, **common)
        elif k == "conditioned":
            cond = estimate_conditioned_tail(model.x_law, _as_count(t), grid, config.trials, stream, **common)
            est = cond.estimates
            extra[f"survivors@{t:g}"] = {
                "survivors": cond.survivors,
                "walks": cond.walks,
                "exact_rate": asy.ladder_survival(_as_count(t)),
            }
        else:
            observable = {"leapover": "leapover", "counting": "counting-cost"}.get(k, "cost")
            est = estimate_stopped_tail(model, t, grid, config.trials, stream, observable=observable,
                                        max_steps=config.max_steps, **common)
        report = ratio_report(est, pred, t, config.tolerance, config.validity_gate, kind=k)
        all_rows.extend(report.rows)
        estimate_rows.extend((k, float(t), e.x, e.successes, e.trials, e.p_hat, e.ci_low, e.ci_high) for e in est)
    report = RatioReport(all_rows)
    n_pass = sum(r.verdict == "PASS" for r in report.rows)
    summary = f"{k}: {n_pass}/{len(report.rows)} rows PASS -> {'PASS' if report.passed else 'FAIL'}"
    report_rows = [tuple(getattr(r, c) for c in REPORT_COLUMNS) for r in report.rows]
    return RunResult(
        k,
        report.passed,
        summary,
        {"estimates.csv": (ESTIMATE_COLUMNS, estimate_rows), "report.csv": (REPORT_COLUMNS, report_rows)},
        extra,
    )


def _run_renewal(config: ExperimentConfig, workers) -> RunResult:
    model = config.model.build()
    spec = config.renewal
    curve_rows, check_rows = [], []
    passed = True
    for index, t in enumerate(config.t_or_n):
        _, _, cost = sample_stopped(model, t, config.trials, RngStream(config.seed, index),
                                    workers=workers, max_steps=config.max_steps)
        for s in spec.s:
            curve = solve(build_kernel(model, s), t, spec.dt)
            curve_rows.extend((s, float(tt), float(v)) for tt, v in zip(curve.t_grid, curve.values))
            solver = float(curve.values[-1])
            mean, se = empirical_laplace(cost, s)
            z = abs(solver - mean) / se if se > 0 else (0.0 if abs(solver - mean) < 1e-12 else math.inf)
            ok = z <= spec.se_multiplier
            passed &= ok
            check_rows.append((s, float(t), solver, mean, se, z, "PASS" if ok else "FAIL"))
    summary = f"renewal-check: {sum(r[-1] == 'PASS' for r in check_rows)}/{len(check_rows)} PASS -> {'PASS' if passed else 'FAIL'}"
    return RunResult(
        "renewal-check",
        passed,
        summary,
        {"curve.csv": (CURVE_COLUMNS, curve_rows), "renewal_check.csv": (RENEWAL_COLUMNS, check_rows)},
    )


def _hypothesis_transform(model):
    if isinstance(model, AbsValue):
        magnitude = model.x_law.magnitude

        def closure(lam, s):
            return generating_transform_conditioned(1.0 - lam, s, magnitude)

        return closure
    return model


def _run_hypothesis(config: ExperimentConfig) -> RunResult:
    h = config.hypothesis
    try:
        params = HypothesisParams(
            h.alpha, h.gamma, power_rule(h.s_exponent, h.s_scale), h.ell_s_const, h.L_const, h.theta,
            h.tolerance, h.points,
        )
    except ValueError as exc:
        raise ConfigError(f"hypothesis: {exc}") from None
    model = config.model.build()
    if isinstance(model, AbsValue) and any(lam >= 1 for lam in h.lambda_grid):
        raise ConfigError("hypothesis: discrete-time checks use lam = 1 - z and need lam < 1")
    result = check_hypothesis(_hypothesis_transform(model), params, h.lambda_grid)
    rows = [(r.lam, r.grid_size, r.sup_deviation, r.argmax_s) for r in result.rows]
    final = result.rows[-1].sup_deviation
    summary = f"hypothesis: final sup deviation {final:.3g} (tol {h.tolerance:g}) -> {result.verdict}"
    return RunResult("hypothesis", result.passed, summary, {"hypothesis.csv": (HYPOTHESIS_COLUMNS, rows)})


def _run_window(config: ExperimentConfig) -> RunResult:
    w = config.window
    result = check_window_hypothesis(
        w.beta, w.t_grid, power_rule(w.s_star_exponent), power_rule(w.s_exponent),
        theta=w.theta, tolerance=w.tolerance, points=w.points,
    )
    rows = [(r.lam, r.grid_size, r.sup_deviation, r.argmax_s) for r in result.rows]
    final = result.rows[-1].sup_deviation
    summary = f"window: final sup deviation {final:.3g} (tol {w.tolerance:g}) -> {result.verdict}"
    return RunResult("window", result.passed, summary, {"window.csv": (WINDOW_COLUMNS, rows)})


def execute(config: ExperimentConfig, workers: int | None = None) -> RunResult:
    """Run an experiment in memory; raises ConfigError or StepLimitExceeded."""
    workers = workers or config.workers or os.cpu_count() or 1
    try:
        if config.kind == "hypothesis":
            return _run_hypothesis(config)
        if config.kind == "window":
            return _run_window(config)
        if config.kind == "renewal-check":
            return _run_renewal(config, workers)
        return _run_monte_carlo(config, workers)
    except (ValueError, TypeError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(str(exc)) from None


def _fmt(value):
    if isinstance(value, float):
        return repr(value)
    return value


def render_csv(columns, rows, header: dict[str, Any]) -> str:
    buf = io.StringIO()
    for key, value in header.items():
        buf.write(f"# {key}={value}\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(columns)
    for row in rows:
        writer.writerow([_fmt(v) for v in row])
    return buf.getvalue()


def write_artifacts(config: ExperimentConfig, result: RunResult, out_dir) -> list[Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    header = {"kind": config.kind, "config_sha256": config_digest(config), "seed": config.seed}
    paths = []
    for name, (columns, rows) in result.tables.items():
        path = out / name
        path.write_text(render_csv(columns, rows, header))
        paths.append(path)
    summary = {**header, "verdict": "PASS" if result.passed else "FAIL", "summary": result.summary, **result.extra}
    path = out / "summary.json"
    path.write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
    paths.append(path)
    return paths


# -- argument parsing -----------------------------------------------------------


def _add_run_flags(p):
    p.add_argument("--config", required=True, help="JSON experiment config")
    p.add_argument("--seed", type=int, default=None, help="override the config seed (default 0)")
    p.add_argument("--workers", type=int, default=None, help="worker processes (default: all cores)")
    p.add_argument("--out", default=None, help="output directory (default: config 'output' or ./results)")


def _law_args(p):
    p.add_argument("--law", required=True)
    for name in ("beta", "xm", "cutoff", "mu", "value"):
        p.add_argument(f"--{name}", type=float, default=None)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ldwalks", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    for name, help_text in (
        ("run", "run an experiment config"),
        ("hypothesis", "run a hypothesis or window config"),
        ("renewal-check", "run a renewal-check config"),
    ):
        _add_run_flags(sub.add_parser(name, help=help_text))

    pred = sub.add_parser("predict", help="evaluate a tail prediction").add_subparsers(dest="which", required=True)
    p = pred.add_parser("iid")
    p.add_argument("--beta", type=float, required=True)
    p.add_argument("--ell", type=float, required=True)
    p.add_argument("--n", type=float, required=True)
    p.add_argument("--x", type=float, required=True)
    p.add_argument("--centered", action="store_true")
    p = pred.add_parser("random-sum")
    for name in ("beta", "ell-y", "gamma-x", "c-x", "t", "x"):
        p.add_argument(f"--{name}", type=float, required=True)
    for name in ("leapover", "leapover-fixed-t"):
        p = pred.add_parser(name)
        for arg in ("beta", "t", "x"):
            p.add_argument(f"--{arg}", type=float, required=True)
    p = pred.add_parser("gut")
    for name in ("beta", "ell-w", "mu", "t", "x"):
        p.add_argument(f"--{name}", type=float, required=True)
    p = pred.add_parser("conditioned")
    p.add_argument("--beta", type=float, required=True)
    p.add_argument("--xm", type=float, default=1.0)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--x", type=float, required=True)
    p = pred.add_parser("conditioned-ladder")
    p.add_argument("--n", type=int, required=True)
    p = pred.add_parser("boundary")
    p.add_argument("--model", required=True)
    p.add_argument("--target", type=float, required=True)
    for name in ("beta", "t", "n", "gamma-x"):
        p.add_argument(f"--{name}", type=float, default=None)

    p = sub.add_parser("sample", help="draw variates from a law")
    _law_args(p)
    p.add_argument("--count", type=int, default=1)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--stream", type=int, default=0)
    return parser


def _predict(args) -> float:
    w = args.which
    if w == "iid":
        return asy.predict_iid(args.beta, args.ell, args.n, args.x, args.centered)
    if w == "random-sum":
        return asy.predict_random_sum(args.beta, args.ell_y, args.gamma_x, args.c_x, args.t, args.x)
    if w == "leapover":
        return asy.predict_leapover(args.beta, 1.0, args.t, args.x)
    if w == "leapover-fixed-t":
        return asy.predict_leapover_fixed_t(args.beta, args.t, args.x)
    if w == "gut":
        return asy.predict_gut(args.beta, args.ell_w, args.mu, args.t, args.x)
    if w == "conditioned":
        return asy.predict_conditioned(law_from_dict({"law": "symmetric-pareto", "beta": args.beta, "xm": args.xm}),
                                       args.n, args.x)
    if w == "conditioned-ladder":
        return asy.ladder_survival(args.n)
    if w == "boundary":
        params = {k: v for k, v in (("beta", args.beta), ("t", args.t), ("n", args.n), ("gamma_x", args.gamma_x))
                  if v is not None}
        return asy.ld_boundary(args.model, params, args.target)
    raise AssertionError(w)


def _sample(args) -> list[float]:
    spec = {"law": args.law}
    spec.update({k: getattr(args, k) for k in ("beta", "xm", "cutoff", "mu", "value") if getattr(args, k) is not None})
    if args.count < 1:
        raise ValueError("count must be >= 1")
    law = law_from_dict(spec)
    return [float(v) for v in law.sample(RngStream(args.seed, args.stream), args.count)]


_KINDS_FOR = {"hypothesis": {"hypothesis", "window"}, "renewal-check": {"renewal-check"}}


def _run_command(args, out) -> int:
    config = load_config(args.config)
    allowed = _KINDS_FOR.get(args.command)
    if allowed and config.kind not in allowed:
        raise ConfigError(f"'{args.command}' expects kind in {sorted(allowed)}, config has {config.kind!r}")
    if args.seed is not None:
        if args.seed < 0:
            raise ConfigError("--seed must be non-negative")
        config = config.model_copy(update={"seed": args.seed})
    if args.workers is not None and args.workers < 1:
        raise ConfigError("--workers must be >= 1")
    result = execute(config, args.workers)
    out_dir = args.out or config.output or "results"
    write_artifacts(config, result, out_dir)
    print(result.summary, file=out)
    return result.exit_code


def main(argv=None, out=None) -> int:
    out = out or sys.stdout
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.command == "predict":
            print(f"{_predict(args):.6g}", file=out)
            return EXIT_PASS
        if args.command == "sample":
            for v in _sample(args):
                print(repr(v), file=out)
            return EXIT_PASS
        return _run_command(args, out)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except StepLimitExceeded as exc:
        print(f"aborted: {exc}", file=sys.stderr)
        return EXIT_RESOURCE
    except (ValueError, TypeError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
