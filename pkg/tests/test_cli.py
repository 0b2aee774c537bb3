import csv
import json
import subprocess
import sys

import numpy as np
import pytest

from chainuplift.cli import main
from chainuplift.data import FeatureSchema, load_csv


FAST = ["--epochs", "2", "--lr", "0.01", "--h", "16", "--h-gate", "8", "--d", "8",
        "--batch-size", "256"]


@pytest.fixture(scope="module")
def workdir(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    assert main(["generate", "--preset", "chainbias", "--n", "1500", "--seed", "7",
                 "--out", str(root / "gen")]) == 0
    assert main(["train", "--schema", str(root / "gen/schema.json"),
                 "--data", str(root / "gen/data.csv"), "--valid", str(root / "gen/data.csv"),
                 "--out", str(root / "model"), *FAST]) == 0
    return root


def _read(path):
    return path.read_bytes()


class TestGenerate:
    def test_files_and_determinism(self, tmp_path):
        for sub in ("a", "b"):
            assert main(["generate", "--n", "200", "--seed", "7", "--out", str(tmp_path / sub)]) == 0
        for name in ("data.csv", "ground_truth.csv", "schema.json"):
            assert _read(tmp_path / "a" / name) == _read(tmp_path / "b" / name)
        ds = load_csv(tmp_path / "a/data.csv", FeatureSchema.load(tmp_path / "a/schema.json"))
        assert ds.N == 200

    def test_zero_rows_is_usage_error(self, tmp_path, capsys):
        assert main(["generate", "--n", "0", "--out", str(tmp_path)]) == 2
        assert "error" in capsys.readouterr().err
        assert not (tmp_path / "data.csv").exists()

    def test_neutral_sidecar_zero(self, tmp_path):
        assert main(["generate", "--preset", "neutral", "--n", "50", "--out", str(tmp_path)]) == 0
        with open(tmp_path / "ground_truth.csv") as fh:
            rows = list(csv.DictReader(fh))
        assert len(rows) == 100
        assert all(float(r["tau_y"]) == 0 and float(r["tau_z"]) == 0 for r in rows)

    def test_env_output_dir(self, tmp_path, monkeypatch):
        monkeypatch.setenv("CHAINUPLIFT_OUT", str(tmp_path / "envout"))
        assert main(["generate", "--n", "20"]) == 0
        assert (tmp_path / "envout/data.csv").exists()

    def test_config_file_with_flag_override(self, tmp_path):
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps({"n": 30, "k": 3, "preset": "neutral"}))
        assert main(["generate", "--config", str(cfg), "--n", "40", "--out", str(tmp_path)]) == 0
        schema = FeatureSchema.load(tmp_path / "schema.json")
        assert schema.K == 3
        assert load_csv(tmp_path / "data.csv", schema).N == 40


class TestTrain:
    def test_outputs(self, workdir):
        echo = json.loads((workdir / "model/config.json").read_text())
        assert echo["L"] == 3 and echo["tie_layers"] == 1 and echo["gate_layers"] == 2
        assert echo["heads"] == 2
        lines = (workdir / "model/history.jsonl").read_text().splitlines()
        assert [json.loads(ln)["epoch"] for ln in lines] == [1, 2]
        assert (workdir / "model/checkpoint.json").exists()

    def test_default_echo(self, workdir, tmp_path):
        assert main(["train", "--schema", str(workdir / "gen/schema.json"),
                     "--data", str(workdir / "gen/data.csv"), "--epochs", "0",
                     "--out", str(tmp_path)]) == 0
        echo = json.loads((tmp_path / "config.json").read_text())
        assert echo["batch_size"] == 2048
        assert (echo["L"], echo["heads"], echo["tie_layers"], echo["gate_layers"]) == (3, 2, 1, 2)

    def test_no_ecenet_variant(self, workdir, tmp_path):
        assert main(["train", "--schema", str(workdir / "gen/schema.json"),
                     "--data", str(workdir / "gen/data.csv"), "--variant", "no-ecenet",
                     "--out", str(tmp_path), *FAST]) == 0
        doc = json.loads((tmp_path / "checkpoint.json").read_text())
        assert doc["config"]["variant"] == "no_ecenet"
        assert "tower.cvr.l0.w" in doc["params"]

    def test_off_grid_warns(self, workdir, tmp_path, caplog):
        with caplog.at_level("WARNING"):
            assert main(["train", "--schema", str(workdir / "gen/schema.json"),
                         "--data", str(workdir / "gen/data.csv"), "--epochs", "0",
                         "--d", "6", "--heads", "3", "--out", str(tmp_path)]) == 0
        assert "d=6" in caplog.text

    def test_missing_data_file(self, workdir, tmp_path, capsys):
        rc = main(["train", "--schema", str(workdir / "gen/schema.json"),
                   "--data", str(tmp_path / "absent.csv"), "--out", str(tmp_path)])
        assert rc == 1
        assert "absent.csv" in capsys.readouterr().err

    def test_missing_required_flag(self, tmp_path):
        assert main(["train", "--out", str(tmp_path)]) == 2

    def test_bad_variant(self, tmp_path):
        assert main(["train", "--variant", "nope", "--out", str(tmp_path)]) == 2


class TestEval:
    def test_report(self, workdir):
        out = workdir / "eval"
        assert main(["eval", "--checkpoint", str(workdir / "model/checkpoint.json"),
                     "--data", str(workdir / "gen/data.csv"), "--segments", "10",
                     "--out", str(out)]) == 0
        report = json.loads((out / "report.json").read_text())
        assert set(report["tasks"]) == {"CTCVR", "CVR", "CTR"}
        for task in report["tasks"].values():
            assert set(task["per_treatment"]) == {"1", "2"}
            assert set(task) >= {"auuc", "qini"}
        assert report["tasks"]["CTCVR"]["auuc"] is not None
        assert set(report["segments"]) == {"1", "2"}
        with open(out / "segments.csv") as fh:
            assert len(list(csv.DictReader(fh))) == 20
        with open(out / "curves.csv") as fh:
            assert next(csv.reader(fh)) == ["task", "k", "x", "gain"]

    def test_repeatable(self, workdir, tmp_path):
        for sub in ("a", "b"):
            assert main(["eval", "--checkpoint", str(workdir / "model/checkpoint.json"),
                         "--data", str(workdir / "gen/data.csv"), "--out", str(tmp_path / sub)]) == 0
        assert _read(tmp_path / "a/report.json") == _read(tmp_path / "b/report.json")

    def test_fingerprint_refusal(self, workdir, tmp_path, capsys):
        schema = json.loads((workdir / "gen/schema.json").read_text())
        schema["fields"][-4]["cardinality"] += 1
        other = tmp_path / "schema.json"
        other.write_text(json.dumps(schema))
        rc = main(["eval", "--checkpoint", str(workdir / "model/checkpoint.json"),
                   "--data", str(workdir / "gen/data.csv"), "--schema", str(other),
                   "--out", str(tmp_path)])
        assert rc == 1
        assert "schema" in capsys.readouterr().err
        assert not (tmp_path / "report.json").exists()


class TestPredict:
    def test_shape_and_determinism(self, workdir, tmp_path):
        for sub in ("a", "b"):
            assert main(["predict", "--checkpoint", str(workdir / "model/checkpoint.json"),
                         "--data", str(workdir / "gen/data.csv"), "--out", str(tmp_path / sub)]) == 0
        assert _read(tmp_path / "a/ite.csv") == _read(tmp_path / "b/ite.csv")
        with open(tmp_path / "a/ite.csv") as fh:
            rows = list(csv.DictReader(fh))
        assert len(rows) == 1500
        assert [c for c in rows[0] if c.startswith("tau_")] == ["tau_y_1", "tau_z_1", "tau_y_2", "tau_z_2"]
        r = rows[3]
        assert float(r["tau_z_2"]) == pytest.approx(float(r["pctcvr_2"]) - float(r["pctcvr_0"]), abs=1e-15)

    def test_tied_treatment_rows_zero_effects(self, workdir, tmp_path):
        doc = json.loads((workdir / "model/checkpoint.json").read_text())
        table = doc["params"]["embed.treatment"]
        width = table["shape"][1]
        table["values"][2 * width:3 * width] = table["values"][:width]
        tied = tmp_path / "tied.json"
        tied.write_text(json.dumps(doc))
        assert main(["predict", "--checkpoint", str(tied), "--data", str(workdir / "gen/data.csv"),
                     "--out", str(tmp_path)]) == 0
        with open(tmp_path / "ite.csv") as fh:
            rows = list(csv.DictReader(fh))
        assert all(float(r["tau_y_2"]) == 0 and float(r["tau_z_2"]) == 0 for r in rows)
        assert any(float(r["tau_z_1"]) != 0 for r in rows)


def test_module_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "chainuplift", "generate", "--n", "0"],
                          capture_output=True, text=True)
    assert proc.returncode == 2 and proc.stdout == ""
    proc = subprocess.run([sys.executable, "-m", "chainuplift", "generate", "--n", "5",
                           "--out", str(tmp_path)], capture_output=True, text=True)
    assert proc.returncode == 0 and proc.stdout == "" and proc.stderr == ""
