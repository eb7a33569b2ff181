import csv
import json
import subprocess
import sys
import xml.etree.ElementTree as ET
from pathlib import Path

import numpy as np
import pytest

from qcds import design as design_mod
from qcds.cli import EXIT_DATASET, EXIT_FAILURE, EXIT_USAGE, ExperimentConfig, main
from qcds.errors import PlotError
from qcds.report import plot

DATA = Path(__file__).resolve().parents[1] / "data"
IRIS = str(DATA / "iris.libsvm")
GLASS = str(DATA / "glass.libsvm")


def csv_rows(path):
    with open(path, newline="") as fh:
        return list(csv.reader(fh))


def csv_bytes(out):
    return {p.relative_to(out): p.read_bytes() for p in sorted(Path(out).rglob("*.csv"))}


def rerun_matches(out, tmp_path):
    again = tmp_path / "again"
    assert main(["run", "--config", str(Path(out) / "config.json"), "--out", str(again)]) == 0
    first = csv_bytes(out)
    assert first and first == csv_bytes(again)


class TestTrain:
    def test_outputs(self, tmp_path, capsys):
        out = tmp_path / "t"
        rc = main(["train", "--design", "bench_ry_cx", "--dataset", IRIS, "--layers", "2", "--epochs", "3",
                   "--split", "0.4,0.3,0.3", "--seed", "7", "--out", str(out)])
        assert rc == 0
        assert "final:" in capsys.readouterr().out
        rows = csv_rows(out / "history.csv")
        assert rows[0] == ["epoch", "train_loss", "train_acc", "val_loss", "val_acc", "test_loss", "test_acc"]
        assert len(rows) == 4
        cfg = ExperimentConfig.from_json((out / "config.json").read_text())
        assert cfg.command == "TRAIN" and cfg.seed == 7 and cfg.train["epochs"] == 3
        manifest = json.loads((out / "manifest.json").read_text())
        assert manifest["wall_clock_s"] >= 0 and "numpy" in manifest and "python" in manifest
        metrics = json.loads((out / "metrics.json").read_text())
        assert metrics["epoch"] == 3 and metrics["split_sizes"] == [60, 45, 45]
        assert design_mod.load(out / "design.design").n_layers == 2
        rerun_matches(out, tmp_path)

    def test_seed_from_environment(self, tmp_path, monkeypatch):
        monkeypatch.setenv("QCDS_SEED", "11")
        out = tmp_path / "s"
        assert main(["train", "--design", "bench_ry_cz", "--dataset", IRIS, "--layers", "1", "--epochs", "1",
                     "--out", str(out)]) == 0
        assert json.loads((out / "config.json").read_text())["seed"] == 11

    def test_eval_tiles_onto_glass(self, tmp_path):
        narrow = tmp_path / "narrow.design"
        design_mod.save(design_mod.random_design(np.random.default_rng(0), 4, 2), narrow)
        out = tmp_path / "e"
        rc = main(["eval", "--design", str(narrow), "--dataset", GLASS, "--tile", "--split", "0.75,0.0,0.25",
                   "--layers", "2", "--epochs", "1", "--out", str(out)])
        assert rc == 0
        metrics = json.loads((out / "metrics.json").read_text())
        assert metrics["design_qubits"] == 9 and metrics["split_sizes"] == [160, 0, 54]
        assert metrics["val_loss"] is None and 0 <= metrics["test_acc"] <= 1
        assert csv_rows(out / "history.csv")[1][3:5] == ["", ""]


class TestSearches:
    def test_random(self, tmp_path):
        out = tmp_path / "r"
        rc = main(["search", "random", "--dataset", IRIS, "--pool", "8", "--layers", "1", "--schedule", "1:0.5",
                   "--final-epochs", "1", "--workers", "1", "--seed", "3", "--out", str(out)])
        assert rc == 0
        rows = csv_rows(out / "ranked.csv")
        assert rows[0] == ["rank", "design", "val_loss", "val_acc", "test_loss", "test_acc"]
        assert [r[0] for r in rows[1:]] == ["1", "2", "3", "4"]
        for r in rows[1:]:
            design_mod.load(out / r[1])
        assert csv_rows(out / "stages.csv")[1][:3] == ["1", "8", "4"]
        rerun_matches(out, tmp_path)

    def test_rl(self, tmp_path):
        out = tmp_path / "l"
        assert main(["search", "rl", "--dataset", IRIS, "--layers", "1", "--inner-epochs", "1",
                     "--max-loops", "3", "--out", str(out)]) == 0
        assert csv_rows(out / "controller_curve.csv")[0] == ["loop", "controller_loss", "metric_value"]
        design_mod.load(out / "suggested.design")
        rerun_matches(out, tmp_path)

    def test_bo(self, tmp_path):
        out = tmp_path / "b"
        assert main(["search", "bo", "--dataset", IRIS, "--layers", "1", "--budget", "4", "--n-init", "3",
                     "--inner-epochs", "1", "--candidates", "32", "--out", str(out)]) == 0
        rows = csv_rows(out / "bo_trace.csv")
        assert rows[0] == ["iteration", "design", "val_loss", "incumbent_loss"] and len(rows) == 5
        design_mod.load(out / rows[1][1])
        rerun_matches(out, tmp_path)


class TestExitCodes:
    def test_bad_flag(self):
        with pytest.raises(SystemExit) as info:
            main(["train", "--dataset", IRIS])
        assert info.value.code == EXIT_USAGE

    def test_bad_split(self, tmp_path):
        assert main(["train", "--design", "bench_ry_cx", "--dataset", IRIS, "--split", "0.5,0.5,0.5",
                     "--out", str(tmp_path)]) == EXIT_USAGE

    def test_unknown_design(self, tmp_path):
        assert main(["train", "--design", "nonsense", "--dataset", IRIS, "--epochs", "1",
                     "--out", str(tmp_path)]) == EXIT_USAGE

    def test_malformed_design_file(self, tmp_path):
        bad = tmp_path / "bad.design"
        bad.write_text("not a design\n")
        assert main(["train", "--design", str(bad), "--dataset", IRIS, "--epochs", "1",
                     "--out", str(tmp_path / "o")]) == EXIT_USAGE

    def test_missing_dataset(self, tmp_path):
        out = tmp_path / "o"
        assert main(["train", "--design", "bench_ry_cx", "--dataset", str(tmp_path / "none.libsvm"),
                     "--out", str(out)]) == EXIT_DATASET
        assert not out.exists()

    def test_unparseable_dataset(self, tmp_path):
        bad = tmp_path / "bad.libsvm"
        bad.write_text("1 1:0.5\n2 1:oops\n")
        assert main(["train", "--design", "bench_ry_cx", "--dataset", str(bad),
                     "--out", str(tmp_path / "o")]) == EXIT_DATASET

    def test_plot_error_is_failure(self, tmp_path, capsys):
        assert main(["plot", str(tmp_path / "missing.csv"), "--out", str(tmp_path)]) == EXIT_FAILURE
        assert "missing.csv" in capsys.readouterr().err

    def test_module_entry_point(self, tmp_path):
        proc = subprocess.run([sys.executable, "-m", "qcds", "train", "--design", "bench_ry_cx", "--dataset",
                               str(tmp_path / "x.libsvm")], capture_output=True, text=True, cwd=tmp_path)
        assert proc.returncode == EXIT_DATASET and "dataset not found" in proc.stderr


HISTORY = "epoch,train_loss,train_acc,val_loss,val_acc,test_loss,test_acc\n"


def write_history(path, n=5, shift=0.0):
    lines = [f"{e},{1 - 0.1 * e + shift},{0.1 * e},,,{1.1 - 0.1 * e},{0.1 * e - shift}" for e in range(1, n + 1)]
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(HISTORY + "\n".join(lines) + "\n")
    return str(path)


class TestPlot:
    def test_two_histories_overlaid(self, tmp_path):
        a = write_history(tmp_path / "run_a" / "history.csv")
        b = write_history(tmp_path / "run_b" / "history.csv", shift=0.05)
        (svg,) = plot([a, b], tmp_path / "figs")
        root = ET.parse(svg).getroot()
        assert root.tag.endswith("svg")
        text = Path(svg).read_text()
        assert "run_a" in text and "run_b" in text and "epoch" in text

    def test_single_history_and_curve(self, tmp_path):
        h = write_history(tmp_path / "h.csv")
        c = tmp_path / "controller_curve.csv"
        c.write_text("loop,controller_loss,metric_value\n1,0.5,1.0\n2,0.3,0.9\n")
        written = plot([h, str(c)], tmp_path / "figs")
        assert [Path(w).name for w in written] == ["history.svg", "controller.svg"]
        for w in written:
            ET.parse(w)

    def test_svg_is_deterministic(self, tmp_path):
        h = write_history(tmp_path / "h.csv")
        a = Path(plot([h], tmp_path / "a")[0]).read_bytes()
        b = Path(plot([h], tmp_path / "b")[0]).read_bytes()
        assert a == b

    def test_malformed_csv_names_file(self, tmp_path):
        bad = tmp_path / "broken.csv"
        bad.write_text(HISTORY + "1,0.5,x,,,0.4,0.3\n")
        with pytest.raises(PlotError, match="broken.csv"):
            plot([str(bad)], tmp_path)
        other = tmp_path / "other.csv"
        other.write_text("a,b\n1,2\n")
        with pytest.raises(PlotError, match="other.csv"):
            plot([str(other)], tmp_path)

    def test_cli_plot(self, tmp_path):
        h = write_history(tmp_path / "h.csv")
        assert main(["plot", h, "--labels", "bench", "--out", str(tmp_path / "f")]) == 0
        ET.parse(tmp_path / "f" / "history.svg")
