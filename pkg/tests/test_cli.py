import json
from pathlib import Path

import numpy as np
import pytest

from sohkit.cli import main
from sohkit.pipeline import FeatureMatrix

FAST_CONFIG = """\
selection_forest_size=30
model_forest_size=40
search_trials=4
ensemble_size=1
epochs=10
"""


@pytest.fixture(scope="module")
def dataset(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli_dataset")
    data = root / "data"
    rc = main(["--seed", "42", "--out", str(data), "synth",
               "--cells", "6", "--cycles", "30",
               "--train", "3", "--feature-selection", "2",
               "--calibration", "1", "--test", "2"])
    assert rc == 0
    cfg = root / "run.cfg"
    cfg.write_text(FAST_CONFIG
                   + f"data_dir={data}\n"
                   + f"manifest={data / 'manifest.csv'}\n")
    return root, data, cfg


@pytest.fixture(scope="module")
def trained_bundle(dataset):
    root, data, cfg = dataset
    out = root / "model"
    rc = main(["--config", str(cfg), "--model", "brr", "--seed", "1",
               "--out", str(out), "train"])
    assert rc == 0
    bundle = out / "model_brr.json"
    assert bundle.exists()
    return bundle


class TestSynth:
    def test_outputs(self, dataset):
        _, data, _ = dataset
        csvs = sorted(p.name for p in data.glob("*.csv"))
        assert "manifest.csv" in csvs
        assert len([n for n in csvs if n != "manifest.csv"]) == 6
        assert len(list(data.glob("*.meta"))) == 6
        roles = [line.split(",")[1] for line
                 in (data / "manifest.csv").read_text().strip().splitlines()[1:]]
        assert roles.count("feature_selection") == 2
        assert roles.count("train") == 1
        assert roles.count("calibration") == 1
        assert roles.count("test") == 2

    def test_partition_mismatch_is_config_error(self, tmp_path):
        rc = main(["--out", str(tmp_path), "synth", "--cells", "4",
                   "--train", "1", "--calibration", "1", "--test", "1"])
        assert rc == 2


class TestFeaturize:
    def test_writes_feature_csvs(self, dataset, tmp_path):
        root, data, cfg = dataset
        out = tmp_path / "feat"
        rc = main(["--config", str(cfg), "--out", str(out), "featurize"])
        assert rc == 0
        files = sorted(out.glob("*_features.csv"))
        assert len(files) == 6
        fm = FeatureMatrix.from_csv(files[0])
        assert len(fm.columns) == 30
        assert np.isfinite(fm.X).all()
        assert np.all((fm.y > 0.5) & (fm.y <= 1.0 + 1e-9))

    def test_cc_only_dataset_gets_18_columns(self, tmp_path):
        data = tmp_path / "cc_data"
        rc = main(["--seed", "7", "--out", str(data), "synth",
                   "--cells", "2", "--cycles", "10", "--protocol", "cc",
                   "--train", "1", "--feature-selection", "0",
                   "--calibration", "0", "--test", "1"])
        assert rc == 0
        out = tmp_path / "cc_feat"
        rc = main(["--data-dir", str(data),
                   "--manifest", str(data / "manifest.csv"),
                   "--out", str(out), "featurize"])
        assert rc == 0
        fm = FeatureMatrix.from_csv(sorted(out.glob("*_features.csv"))[0])
        assert len(fm.columns) == 18
        assert not any(c.startswith("cv") for c in fm.columns)


class TestSelect:
    def test_select_runs(self, dataset, capsys):
        root, data, cfg = dataset
        rc = main(["--config", str(cfg), "--out", str(root / "sel"), "select"])
        assert rc == 0
        out = capsys.readouterr().out
        assert "selected" in out


class TestTrain:
    def test_bundle_round_trips(self, trained_bundle):
        payload = json.loads(Path(trained_bundle).read_text())
        assert payload["kind"] == "brr"
        assert payload["feature_names"]
        assert payload["recalibration"] is not None

    def test_rerun_same_seed_byte_identical(self, dataset, tmp_path):
        root, data, cfg = dataset
        out_a, out_b = tmp_path / "a", tmp_path / "b"
        for out in (out_a, out_b):
            rc = main(["--config", str(cfg), "--model", "brr", "--seed", "9",
                       "--out", str(out), "train"])
            assert rc == 0
        assert (out_a / "model_brr.json").read_bytes() == \
               (out_b / "model_brr.json").read_bytes()

    def test_missing_calibration_cells_is_config_error(self, tmp_path):
        data = tmp_path / "nocal"
        rc = main(["--seed", "3", "--out", str(data), "synth",
                   "--cells", "4", "--cycles", "10",
                   "--train", "2", "--feature-selection", "0",
                   "--calibration", "0", "--test", "2"])
        assert rc == 0
        rc = main(["--data-dir", str(data),
                   "--manifest", str(data / "manifest.csv"),
                   "--model", "brr", "--out", str(tmp_path / "m"), "train"])
        assert rc == 2

    def test_missing_data_dir_is_data_error(self, tmp_path):
        rc = main(["--data-dir", str(tmp_path / "nowhere"),
                   "--manifest", str(tmp_path / "nowhere" / "manifest.csv"),
                   "--model", "brr", "--out", str(tmp_path / "m"), "train"])
        assert rc in (2, 3)

    def test_dnne_bundle_records_architecture(self, dataset, tmp_path):
        root, data, cfg = dataset
        out = tmp_path / "dnne"
        rc = main(["--config", str(cfg), "--model", "dnne", "--seed", "1",
                   "--out", str(out), "train"])
        assert rc == 0
        payload = json.loads((out / "model_dnne.json").read_text())
        assert payload["kind"] == "dnne"
        d = len(payload["feature_names"])
        w1 = payload["params"]["members"][0]["W1"]
        expected_h1 = max(-(-d // 2), 4) if d >= 10 else 4
        assert w1["shape"][0] == d
        if d < 10:
            assert w1["shape"][1] == 4


class TestEvaluate:
    def test_metrics_files(self, dataset, trained_bundle, tmp_path):
        root, data, cfg = dataset
        out = tmp_path / "eval"
        rc = main(["--config", str(cfg), "--out", str(out),
                   "evaluate", "--bundle", str(trained_bundle)])
        assert rc == 0
        metrics = json.loads((out / "metrics_brr.json").read_text())
        assert "__average__" in metrics
        cells = [k for k in metrics if k != "__average__"]
        assert len(cells) == 2
        for rep in metrics.values():
            assert 0 <= rep["c_score"] <= 100
            assert rep["rmspe"] >= rep["mape"] - 1e-9
            assert rep["sharpness"] > 0
        preds = (out / "predictions_brr.csv").read_text().strip().splitlines()
        assert preds[0] == "cell_id,cycle_index,y_true,mu,sigma,lo90,hi90"
        assert len(preds) - 1 == metrics["__average__"]["n"]


class TestPredict:
    def test_single_cycle_prediction(self, dataset, trained_bundle, capsys):
        root, data, cfg = dataset
        cell_csv = sorted(p for p in data.glob("*.csv")
                          if p.name != "manifest.csv")[-1]
        rc = main(["--config", str(cfg), "predict",
                   "--bundle", str(trained_bundle), "--input", str(cell_csv)])
        assert rc == 0
        out = capsys.readouterr().out
        assert "SOH" in out and "90% interval" in out

    def test_missing_bundle_file(self, dataset, tmp_path):
        root, data, cfg = dataset
        cell_csv = sorted(p for p in data.glob("*.csv")
                          if p.name != "manifest.csv")[0]
        rc = main(["--config", str(cfg), "predict",
                   "--bundle", str(tmp_path / "nope.json"),
                   "--input", str(cell_csv)])
        assert rc in (2, 3)
