import json

import pytest
from click.testing import CliRunner

from xlab.cli import main
from xlab.exact import build_generator, stationary_exact
from xlab.exact.generator import read_distribution_csv
from xlab.params import BoundaryParams


@pytest.fixture
def runner():
    return CliRunner()


def test_list(runner):
    res = runner.invoke(main, ["list"])
    assert res.exit_code == 0
    assert "reverse-bias-scaling" in res.output and "(exploratory)" in res.output


def test_list_json(runner):
    res = runner.invoke(main, ["list", "--json"])
    assert res.exit_code == 0
    catalog = json.loads(res.output)
    assert any(e["name"] == "triple-point-bound" and e["criteria"] == [8] for e in catalog)


def test_run_writes_outputs(runner, tmp_path):
    out = tmp_path / "run"
    res = runner.invoke(main, ["run", "--preset", "monotone-coupling", "--replicas", "5", "--seed", "3",
                               "--out", str(out)])
    assert res.exit_code == 0, res.output
    assert "componentwise_violations = 0 PASS" in res.output
    summary = json.loads((out / "summary.json").read_text())
    assert summary["inputs"]["seed"] == 3 and summary["inputs"]["replicas"] == 5
    assert (out / "violations.csv").exists() and (out / "timing.json").exists()


def test_run_from_config(runner, tmp_path):
    cfg = tmp_path / "kac.cfg"
    cfg.write_text("preset = kac-return\nreplicas = 100\nseed = 4\n")
    res = runner.invoke(main, ["run", "--config", str(cfg), "--seed", "8", "--out", str(tmp_path / "o")])
    assert res.exit_code == 0, res.output
    assert json.loads((tmp_path / "o" / "summary.json").read_text())["inputs"]["seed"] == 8


def test_run_param_flags(runner):
    res = runner.invoke(main, ["run", "--preset", "kac-return", "--replicas", "100", "--p", "0.7",
                               "--alpha", "0.5", "--beta", "0.3"])
    assert res.exit_code == 0, res.output


def test_run_errors(runner):
    assert runner.invoke(main, ["run", "--preset", "nope"]).exit_code != 0
    assert runner.invoke(main, ["run"]).exit_code != 0
    res = runner.invoke(main, ["run", "--preset", "kac-return", "--replicas", "0"])
    assert res.exit_code != 0 and "replica" in res.output
    assert runner.invoke(main, ["run", "--preset", "kac-return", "--seed", "-1"]).exit_code != 0


def test_run_failing_criterion_exits_nonzero(runner):
    # two escape samples per threshold are far too few for the ratio band
    res = runner.invoke(main, ["run", "--preset", "blocking-escape", "--replicas", "2", "--seed", "0"])
    assert "FAIL" in res.output and res.exit_code == 1


def test_exact_stationary_csv(runner, tmp_path):
    out = tmp_path / "pi.csv"
    res = runner.invoke(main, ["exact", "--n", "4", "--p", "0.7", "--alpha", "0.5", "--beta", "0.3",
                               "--out", str(out)])
    assert res.exit_code == 0, res.output
    pi = read_distribution_csv(out)
    expected = stationary_exact(build_generator(BoundaryParams(0.7, alpha=0.5, beta=0.3), 4))
    assert pi == pytest.approx(expected, abs=1e-15)


def test_exact_stationary_stdout(runner):
    res = runner.invoke(main, ["exact", "--n", "1", "--p", "0.5", "--alpha", "1", "--beta", "1"])
    assert res.exit_code == 0
    rows = dict(line.split(",") for line in res.output.strip().splitlines())
    assert float(rows["0"]) == pytest.approx(0.5) and float(rows["1"]) == pytest.approx(0.5)


def test_exact_mixing(runner):
    # N=1 with alpha = beta = 1: TV from a point is (1/2) exp(-2t)
    res = runner.invoke(main, ["exact", "--n", "1", "--task", "mixing", "--p", "0.5", "--alpha", "1",
                               "--beta", "1", "--epsilon", "0.25"])
    assert res.exit_code == 0
    assert float(res.output) == pytest.approx(0.5 * 0.6931471805599453, rel=1e-5)


def test_exact_kac(runner):
    res = runner.invoke(main, ["exact", "--n", "3", "--task", "kac", "--p", "0.7", "--alpha", "0.5",
                               "--beta", "0.3", "--gamma", "0.1", "--delta", "0.2"])
    assert res.exit_code == 0
    d = json.loads(res.output)
    assert d["first_step"] == pytest.approx(d["kac"], rel=1e-10)


def test_exact_phase(runner):
    res = runner.invoke(main, ["exact", "--n", "2", "--task", "phase", "--p", "0.75", "--alpha", "1",
                               "--beta", "1"])
    assert res.exit_code == 0
    assert json.loads(res.output) == {"phase": "MaxCurrent", "a": 0.0, "b": 0.0}


def test_exact_errors(runner):
    assert runner.invoke(main, ["exact", "--n", "3"]).exit_code != 0
    assert runner.invoke(main, ["exact", "--n", "15", "--p", "0.7", "--alpha", "1", "--beta", "1"]).exit_code != 0
    assert runner.invoke(main, ["exact", "--n", "3", "--p", "0.3", "--alpha", "1"]).exit_code != 0
