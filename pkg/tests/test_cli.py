import io
import json
import subprocess
import sys

import pytest

from ldwalks.cli import config_digest, load_config, main

LEAPOVER = {
    "kind": "leapover",
    "model": {"coupling": "identical", "x_law": {"law": "pareto", "beta": 0.5, "xm": 1.0}},
    "t_or_n": [1000],
    "x_grid": [1e6, 1e7],
    "trials": 40_000,
    "seed": 3,
}


def run(argv):
    buf = io.StringIO()
    code = main(argv, out=buf)
    return code, buf.getvalue()


def write(tmp_path, cfg, name="cfg.json"):
    path = tmp_path / name
    path.write_text(json.dumps(cfg))
    return str(path)


@pytest.mark.parametrize(
    "argv,expected",
    [
        (["predict", "leapover", "--beta", "0.5", "--t", "1000", "--x", "1e6"], "0.0201317"),
        (["predict", "conditioned-ladder", "--n", "100"], "0.0563485"),
        (["predict", "iid", "--beta", "0.5", "--ell", "1.7724538509055159", "--n", "100", "--x", "1e8"], "0.01"),
    ],
)
def test_predict(argv, expected):
    code, text = run(argv)
    assert code == 0
    assert text.strip() == expected


def test_sample_is_deterministic():
    argv = ["sample", "--law", "pareto", "--beta", "0.5", "--count", "3", "--seed", "7"]
    a, b = run(argv), run(argv)
    assert a == b
    values = [float(v) for v in a[1].split()]
    assert len(values) == 3 and all(v >= 1.0 for v in values)
    other = run(argv[:-1] + ["8"])[1]
    assert other != a[1]


def test_run_writes_headers_and_columns(tmp_path):
    out = tmp_path / "out"
    code, _ = run(["run", "--config", write(tmp_path, LEAPOVER), "--workers", "1", "--out", str(out)])
    assert code in (0, 1)
    text = (out / "report.csv").read_text().splitlines()
    assert text[0] == "# kind=leapover"
    assert text[1] == f"# config_sha256={config_digest(load_config(tmp_path / 'cfg.json'))}"
    assert text[2] == "# seed=3"
    assert (out / "estimates.csv").exists()
    summary = json.loads((out / "summary.json").read_text())
    assert summary["verdict"] in ("PASS", "FAIL")


def test_workers_do_not_change_outputs(tmp_path):
    path = write(tmp_path, LEAPOVER)
    for w in (1, 2):
        assert run(["run", "--config", path, "--workers", str(w), "--out", str(tmp_path / f"w{w}")])[0] in (0, 1)
    for name in ("estimates.csv", "report.csv", "summary.json"):
        assert (tmp_path / "w1" / name).read_bytes() == (tmp_path / "w2" / name).read_bytes()


def test_seed_override_changes_header(tmp_path):
    path = write(tmp_path, LEAPOVER)
    run(["run", "--config", path, "--seed", "11", "--out", str(tmp_path / "o")])
    assert "# seed=11" in (tmp_path / "o" / "report.csv").read_text()


def test_exit_pass_and_fail_for_hypothesis(tmp_path):
    cfg = {
        "kind": "hypothesis",
        "model": {"coupling": "identical", "x_law": {"law": "mittag-leffler", "beta": 0.5}},
        "hypothesis": {"alpha": 0.5, "gamma": 1.5, "s_exponent": 2.0, "lambda_grid": [0.1, 0.01, 0.001, 0.0001]},
    }
    assert run(["hypothesis", "--config", write(tmp_path, cfg), "--out", str(tmp_path / "p")])[0] == 0
    cfg["hypothesis"]["s_exponent"] = 0.5
    assert run(["hypothesis", "--config", write(tmp_path, cfg), "--out", str(tmp_path / "f")])[0] == 1
    lines = (tmp_path / "f" / "hypothesis.csv").read_text().splitlines()
    assert lines[3].split(",")[:3] == ["lambda", "grid_size", "sup_deviation"]


@pytest.mark.parametrize(
    "patch",
    [
        {"x_grid": []},
        {"x_grid": [1e7, 1e6]},
        {"unknown_key": 1},
        {"trials": 0},
        {"kind": "nonsense"},
        {"model": {"coupling": "identical", "x_law": {"law": "pareto", "beta": 1.5}}},
    ],
)
def test_config_errors_exit_2(tmp_path, patch):
    assert run(["run", "--config", write(tmp_path, {**LEAPOVER, **patch})])[0] == 2


def test_missing_config_and_wrong_subcommand(tmp_path):
    assert run(["run", "--config", str(tmp_path / "absent.json")])[0] == 2
    assert run(["renewal-check", "--config", write(tmp_path, LEAPOVER)])[0] == 2


def test_step_cap_exit_3(tmp_path):
    cfg = {**LEAPOVER, "max_steps": 5, "trials": 1000}
    assert run(["run", "--config", write(tmp_path, cfg), "--out", str(tmp_path / "o")])[0] == 3


def test_renewal_check_runs(tmp_path):
    cfg = {
        "kind": "renewal-check",
        "model": {"coupling": "identical", "x_law": {"law": "pareto", "beta": 0.5}},
        "t_or_n": [20],
        "trials": 100_000,
        "renewal": {"s": [0.05], "dt": 0.02},
    }
    code, _ = run(["renewal-check", "--config", write(tmp_path, cfg), "--out", str(tmp_path / "o")])
    assert code == 0
    assert (tmp_path / "o" / "curve.csv").read_text().startswith("# kind=renewal-check\n")


def test_digest_ignores_workers_and_output():
    a = load_config_from(LEAPOVER)
    b = load_config_from({**LEAPOVER, "workers": 4, "output": "elsewhere"})
    c = load_config_from({**LEAPOVER, "seed": 4})
    assert config_digest(a) == config_digest(b) != config_digest(c)


def load_config_from(raw):
    from ldwalks.cli import ExperimentConfig

    return ExperimentConfig.model_validate(raw)


def test_module_entry_point():
    proc = subprocess.run([sys.executable, "-m", "ldwalks", "predict", "conditioned-ladder", "--n", "1"],
                          capture_output=True, text=True, check=True)
    assert proc.stdout.strip() == "0.5"
