import json

import pytest
import yaml
from click.testing import CliRunner

from piesn import cli
from piesn.config import load_config, parse_config
from piesn.errors import ConfigError, TrainingInstability

from test_harness import TINY


def write_cfg(tmp_path, doc, name="cfg.yaml"):
    path = tmp_path / name
    path.write_text(yaml.safe_dump(doc))
    return str(path)


def run(*args):
    return CliRunner().invoke(cli.main, [str(a) for a in args])


def test_unknown_key_is_rejected_with_its_path():
    doc = dict(TINY, reservoir={"n_x": 10, "spectral": 0.9})
    with pytest.raises(ConfigError, match=r"reservoir\.spectral"):
        parse_config(doc)


def test_out_of_range_value_names_the_field():
    doc = dict(TINY, reservoir={"n_x": 10, "rho": 1.2})
    with pytest.raises(ConfigError, match=r"reservoir\.rho"):
        parse_config(doc)


def test_shipped_configs_all_validate():
    from pathlib import Path
    root = Path(__file__).resolve().parents[1] / "configs"
    files = sorted(root.glob("*/*.yaml"))
    assert len(files) >= 16
    for f in files:
        load_config(f)


def test_cli_bad_config_exits_2(tmp_path):
    path = write_cfg(tmp_path, dict(TINY, data=dict(TINY["data"], dt=-1.0)))
    r = run("simulate", path)
    assert r.exit_code == 2 and "data.dt" in r.output


def test_simulate_writes_every_row_and_is_idempotent(tmp_path):
    path = write_cfg(tmp_path, TINY)
    out = tmp_path / "new" / "dir"
    assert run("simulate", path, "-o", out).exit_code == 0
    csv_bytes = (out / "series.csv").read_bytes()
    assert csv_bytes.decode().count("\n") == 1 + 280
    assert run("simulate", path, "-o", out).exit_code == 0
    assert (out / "series.csv").read_bytes() == csv_bytes


def test_train_esn_only_then_evaluate(tmp_path):
    path = write_cfg(tmp_path, TINY)
    r = run("train", path, "--mode", "esn-only", "-o", tmp_path)
    assert r.exit_code == 0, r.output
    doc = json.loads(r.output)
    assert doc["mode"] == "esn-only"
    assert (tmp_path / "train_report.csv").read_text().count("\n") == 1
    r = run("evaluate", path, tmp_path / "model.json", "-o", tmp_path)
    assert r.exit_code == 0
    metrics = json.loads((tmp_path / "metrics.json").read_text())
    assert metrics["test_mse"] == pytest.approx(doc["test_mse"])


def test_train_adaptive_records_weights(tmp_path):
    path = write_cfg(tmp_path, TINY)
    assert run("train", path, "-o", tmp_path).exit_code == 0
    meta = json.loads((tmp_path / "model.json").read_text())
    text = json.dumps(meta)
    assert "s_d" in text and "s_f" in text
    rows = (tmp_path / "train_report.csv").read_text().splitlines()
    assert rows[0].startswith("outer,inner") and len(rows) == 1 + 2 * 3


def test_training_instability_exits_4(tmp_path, monkeypatch):
    def boom(*a, **k):
        raise TrainingInstability("diverged")

    monkeypatch.setattr("piesn.harness.experiments.fit_models", boom)
    r = run("train", write_cfg(tmp_path, TINY), "-o", tmp_path)
    assert r.exit_code == 4


def test_suite_threshold_failure_exits_3_but_reports(tmp_path):
    doc = dict(TINY, thresholds={"min_test_reduction": 0.999})
    r = run("suite", write_cfg(tmp_path, doc), "-o", tmp_path, "--workers", 1)
    assert r.exit_code == 3
    report = json.loads((tmp_path / "comparison_report.json").read_text())
    assert report["passed"] is False and report["scheduled"] == 2 and report["failures"]
    assert (tmp_path / "comparison_runs.csv").exists()


def test_suite_rejects_negative_workers(tmp_path):
    assert run("suite", write_cfg(tmp_path, TINY), "--workers", -1).exit_code == 2


def test_missing_section_exits_2(tmp_path):
    doc = {k: v for k, v in TINY.items() if k != "experiment"}
    assert run("suite", write_cfg(tmp_path, doc)).exit_code == 2
