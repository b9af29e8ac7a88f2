import orjson
import pandas as pd
import pytest
from typer.testing import CliRunner

from app.cli import app

runner = CliRunner()


@pytest.fixture
def short_config(tmp_path):
    path = tmp_path / "short.json"
    path.write_bytes(orjson.dumps({"duration": 1.0}))
    return path


def test_check_model_json():
    result = runner.invoke(app, ["check-model", "--json"])
    assert result.exit_code == 0
    report = orjson.loads(result.stdout)
    assert report["partitions"]["n_unobservable"] == 1
    assert report["estimation_accuracy"] == pytest.approx(1.0)


def test_check_model_text():
    result = runner.invoke(app, ["check-model"])
    assert result.exit_code == 0
    assert "eig(A11)" in result.stdout
    assert "invariant zeros = none" in result.stdout


def test_run_writes_series_and_metrics(short_config, tmp_path):
    out = tmp_path / "out"
    result = runner.invoke(app, ["run", "--config", str(short_config), "--seed", "3", "--out", str(out)])
    assert result.exit_code == 0, result.stderr
    df = pd.read_csv(out / "run_3.csv")
    assert len(df) == 1001
    metrics = orjson.loads((out / "run_3.json").read_bytes())
    assert metrics["seed"] == 3
    assert isinstance(metrics["events"], list)


def test_montecarlo_writes_summary(short_config, tmp_path):
    out = tmp_path / "mc"
    args = ["montecarlo", "--config", str(short_config), "--runs", "2", "--seed-base", "4", "--out", str(out)]
    result = runner.invoke(app, args + ["--workers", "1"])
    assert result.exit_code == 0, result.stderr
    summary = orjson.loads((out / "montecarlo.json").read_bytes())
    assert summary["n_runs"] == 2
    assert pd.read_csv(out / "montecarlo_runs.csv")["seed"].tolist() == [4, 5]


def test_invalid_json_exits_with_configuration_code(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    result = runner.invoke(app, ["check-model", "--config", str(bad)])
    assert result.exit_code == 2
    assert "not valid JSON" in orjson.loads(result.stderr)["error"]


def test_attack_above_bound_exits_with_configuration_code(tmp_path):
    cfg = tmp_path / "attack.json"
    cfg.write_bytes(orjson.dumps({"attack": {"kind": "step", "magnitude": 20.0}}))
    result = runner.invoke(app, ["run", "--config", str(cfg), "--out", str(tmp_path)])
    assert result.exit_code == 2


def test_unwritable_output_exits_with_runtime_code(short_config, tmp_path):
    blocker = tmp_path / "blocker"
    blocker.write_text("")
    result = runner.invoke(app, ["run", "--config", str(short_config), "--out", str(blocker)])
    assert result.exit_code == 3


def test_piecewise_attack_above_bound_exits_with_configuration_code(tmp_path):
    cfg = tmp_path / "piecewise.json"
    cfg.write_bytes(orjson.dumps({"attack": {"kind": "piecewise", "samples": [[0.0, 1.0], [1.0, -11.0]]}}))
    result = runner.invoke(app, ["check-model", "--config", str(cfg)])
    assert result.exit_code == 2
    assert orjson.loads(result.stderr)["error"] == "Invalid scenario configuration"


def test_unexpected_failure_exits_with_runtime_code(monkeypatch, tmp_path):
    def broken(config, seed):
        raise ValueError("boom")

    monkeypatch.setattr("app.cli.run_scenario", broken)
    result = runner.invoke(app, ["run", "--out", str(tmp_path)])
    assert result.exit_code == 3
    payload = orjson.loads(result.stderr)
    assert payload["detalhes"] == "ValueError: boom"
