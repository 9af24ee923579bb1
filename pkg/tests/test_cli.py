import json

import numpy as np
import pytest

from peerrec.analysis import OutcomePanel
from peerrec.cli import main

TINY = {
    "synthetic": {"n_authors": 60, "n_sites": 50, "horizon_days": 21, "seed": 3,
                  "base_rates": {"journal_update": 1.0}},
    "seed": 1,
    "train_end_day": 12,
    "validation_end_day": 16,
    "test_end_day": 21,
    "scorer": "MLP",
    "baselines": ["MostInits", "Random"],
    "feature_dim": 4,
    "mlp": {"hidden_units": 8, "epochs": 3, "holdout_fraction": 0.1},
    "coverage_authors": 5,
    "n_participants": 5,
}


@pytest.fixture
def tiny_config(tmp_path):
    p = tmp_path / "run.json"
    p.write_text(json.dumps({**TINY, "output_dir": str(tmp_path / "out")}))
    return p


def test_help_exits_zero(capsys):
    assert main(["--help"]) == 0
    assert "pipeline" in capsys.readouterr().out


@pytest.mark.parametrize("argv", [[], ["frobnicate"], ["analyze"], ["power"], ["power", "--rho", "abc"]])
def test_usage_errors_exit_one(argv, capsys):
    assert main(argv) == 1
    assert "error" in capsys.readouterr().err


def test_missing_log_names_the_flag(tmp_path, capsys):
    assert main(["extract", "--output-dir", str(tmp_path)]) == 1
    assert "--log" in capsys.readouterr().err
    assert main(["validate", "--log", str(tmp_path / "nope.jsonl")]) == 1
    assert "--log" in capsys.readouterr().err


def test_bad_log_line_exits_one(tmp_path, capsys):
    p = tmp_path / "bad.jsonl"
    p.write_text('{"ts":1,"kind":"poke","actor":"a","site":"s"}\n')
    assert main(["validate", "--log", str(p)]) == 1
    assert "line 1" in capsys.readouterr().err


def test_power(capsys):
    assert main(["analyze", "power", "--rho", "0.28", "--json"]) == 0
    out = json.loads(capsys.readouterr().out)
    assert abs(out["n"] - 75) <= 7.5
    assert main(["power", "--rho", "0.28"]) == 0
    assert capsys.readouterr().out.strip() == f"n = {out['n']}"
    assert main(["power", "--rho", "1.5"]) == 1


def test_analyze_effects(tmp_path, capsys):
    rng = np.random.default_rng(0)
    T = np.repeat([1.0, 0.0], 30)
    a = rng.normal(size=60)
    OutcomePanel([f"u{i}" for i in range(60)], T, a[:, None], 2 * T + a + rng.normal(size=60),
                 ["x"]).to_csv(tmp_path / "p.csv")
    argv = ["analyze", "effects", "--panel", str(tmp_path / "p.csv"), "--n-bootstrap", "50", "--seed", "3",
            "--json"]
    assert main(argv) == 0
    first = json.loads(capsys.readouterr().out)
    assert [e["method"] for e in first] == ["raw", "ols", "doubly_robust"]
    assert all(e["seed"] == 3 and e["n"] == 60 and e["ci"][0] <= e["point"] <= e["ci"][1] for e in first)
    assert main(argv) == 0
    assert json.loads(capsys.readouterr().out) == first
    assert main(["analyze", "effects", "--panel", str(tmp_path / "missing.csv")]) == 1
    assert main(argv[:4] + ["--covariates", "nope"]) == 1


def test_stages_end_to_end(tiny_config, tmp_path, capsys):
    cfg = ["--config", str(tiny_config)]
    assert main(["generate", *cfg, "--json"]) == 0
    log = json.loads(capsys.readouterr().out)["log"]
    assert main(["validate", "--log", log, "--json"]) == 0
    assert json.loads(capsys.readouterr().out)["n_records"] > 0
    assert main(["extract", *cfg, "--log", log, "--json"]) == 0
    assert json.loads(capsys.readouterr().out)["n_samples"] > 0
    assert main(["train", *cfg, "--log", log, "--json"]) == 0
    model = json.loads(capsys.readouterr().out)["model"]
    assert main(["evaluate", *cfg, "--log", log, "--model", model]) == 0
    table = capsys.readouterr().out
    assert "MRR" in table and "Random" in table
    assert main(["coverage", *cfg, "--log", log, "--model", model, "--json"]) == 0
    assert "Random" in json.loads(capsys.readouterr().out)
    assert main(["evaluate", *cfg, "--log", log]) == 1
    assert "--model" in capsys.readouterr().err
    assert main(["recommend", *cfg, "--log", log, "--model", model, "--json"]) == 0
    batch = json.loads(capsys.readouterr().out)["batch_dir"]
    with open(f"{batch}/manifest.csv") as fh:
        assert fh.readline().strip() == "participant,batch,slot,site,score,model_rank"
    out = tmp_path / "out"
    assert any(out.rglob("provenance*.json"))


def test_pipeline_is_deterministic(tmp_path, capsys):
    outs = []
    for name in ("a", "b"):
        p = tmp_path / f"{name}.json"
        p.write_text(json.dumps({**TINY, "output_dir": str(tmp_path / name)}))
        assert main(["pipeline", "--config", str(p)]) == 0
        outs.append(tmp_path / name)
    capsys.readouterr()
    for rel in ("metrics.json", "model.bin", "batch/batch-1/manifest.csv"):
        assert (outs[0] / rel).read_bytes() == (outs[1] / rel).read_bytes()
