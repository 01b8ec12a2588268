"""CLI tests: pipeline subcommands, overrides, exit codes."""

import json

import pytest

from riskgate.cli import main
from riskgate.scenario_gen import load_database


@pytest.fixture(scope="module")
def dataset(tmp_path_factory):
    path = tmp_path_factory.mktemp("cli") / "data.csv"
    code = main([
        "generate", "--out", str(path), "--n", "240", "--splits", "150,45,45",
        "--seed", "11", "--contingencies", "5,6",
    ])
    assert code == 0
    return path


def test_generate_output_loads(dataset):
    db = load_database(dataset)
    assert len(db) == 240
    assert db.contingencies == [5, 6]
    assert db.seed == 11


def test_train_calibrate_evaluate(dataset, tmp_path):
    model = tmp_path / "model.json"
    assert main(["train", "--data", str(dataset), "--contingency", "6",
                 "--rounds", "10", "--mode", "samme", "--out", str(model)]) == 0
    assert main(["calibrate", "--data", str(dataset), "--model", str(model)]) == 0
    doc = json.loads(model.read_text())
    assert doc["calibration"] is not None

    metrics = tmp_path / "metrics.json"
    assert main(["evaluate", "--data", str(dataset), "--model", str(model),
                 "--probability", "0.0001", "--cost-ratio", "0.999",
                 "--bins", "5", "--out", str(metrics)]) == 0
    report = json.loads(metrics.read_text())
    assert report["contingency"] == 6
    assert 0.0 <= report["vote_error"] <= 1.0
    assert report["residual_risk"] >= 0.0


def test_triage_command(dataset, tmp_path):
    models = []
    for c in (5, 6):
        model = tmp_path / f"model{c}.json"
        assert main(["train", "--data", str(dataset), "--contingency", str(c),
                     "--rounds", "8", "--mode", "samme", "--out", str(model)]) == 0
        assert main(["calibrate", "--data", str(dataset), "--model", str(model)]) == 0
        models.append(str(model))
    contingencies = tmp_path / "contingencies.json"
    contingencies.write_text(json.dumps([
        {"line_id": 5, "p_c": 0.0003, "cost_ratio": 500.0 / 501.0},
        {"line_id": 6, "p_c": 0.0001, "cost_ratio": 1000.0 / 1001.0},
    ]))
    out = tmp_path / "triage.csv"
    assert main(["triage", "--data", str(dataset), "--models", ",".join(models),
                 "--contingencies-file", str(contingencies), "--budget", "12",
                 "--out", str(out)]) == 0
    lines = out.read_text().splitlines()
    assert lines[0].startswith("rank,scenario,condition,contingency")
    assert len(lines) == 1 + 2 * 45  # two contingencies x test conditions
    assert sum(1 for ln in lines[1:] if ln.split(",")[7] == "1") == 12


def test_experiment_command(tmp_path):
    out = tmp_path / "exp"
    config = tmp_path / "config.json"
    config.write_text(json.dumps({
        "n": 240, "splits": [150, 45, 45], "seed": 11, "rounds": 6, "repetitions": 2,
    }))
    assert main(["experiment", "imbalance", "--config", str(config), "--out", str(out)]) == 0
    assert (out / "imbalance.csv").exists()
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["seed"] == 11


def test_exit_code_config_error(tmp_path):
    assert main(["train", "--data", str(tmp_path / "missing.csv"),
                 "--contingency", "6", "--out", str(tmp_path / "m.json")]) == 2
    bad = tmp_path / "bad.csv"
    bad.write_text("not,a,dataset\n")
    assert main(["train", "--data", str(bad), "--contingency", "6",
                 "--out", str(tmp_path / "m.json")]) == 2


def test_exit_code_data_error(dataset, tmp_path):
    # contingency 5 exists but asking for an unlabeled one is a config error;
    # a single-class training split is a data error (exit 3)
    import numpy as np

    from riskgate.scenario_gen import LabeledDatabase, OperatingCondition, save_database

    conditions = [
        OperatingCondition(i, np.full(3, 60.0), np.full(3, 60.0), np.zeros(6), np.zeros(11))
        for i in range(8)
    ]
    db = LabeledDatabase(
        conditions=conditions,
        labels={5: np.ones(8, dtype=int)},
        splits=["train"] * 4 + ["calib"] * 2 + ["test"] * 2,
        seed=1,
    )
    path = tmp_path / "single.csv"
    save_database(db, path)
    assert main(["train", "--data", str(path), "--contingency", "5",
                 "--out", str(tmp_path / "m.json")]) == 3
