"""Command line interface: artifacts, determinism, exit codes."""

import csv
import json
from pathlib import Path

import pytest

from onetr import make_blobs, write_dataset_csv
from onetr.cli import main, parse_vg_values


@pytest.fixture(scope="module")
def small_csvs(tmp_path_factory):
    root = tmp_path_factory.mktemp("data")
    ds = make_blobs()
    train_path = root / "train.csv"
    test_path = root / "test.csv"
    write_dataset_csv(train_path, ds.x_train[:240], ds.y_train[:240])
    write_dataset_csv(test_path, ds.x_test[:120], ds.y_test[:120])
    return str(train_path), str(test_path)


@pytest.fixture(scope="module")
def trained_checkpoint(tmp_path_factory, small_csvs):
    out = tmp_path_factory.mktemp("train_run")
    train_csv, test_csv = small_csvs
    rc = main(["train", "--out", str(out), "--hidden", "8", "--epochs", "6",
               "--data", train_csv, "--test-data", test_csv])
    assert rc == 0
    return str(out / "checkpoint.json")


def test_parse_vg_values_forms():
    assert parse_vg_values("0.7:1.0:0.05") == pytest.approx(
        [0.7, 0.75, 0.8, 0.85, 0.9, 0.95, 1.0])
    assert parse_vg_values("0.8,1.0") == [0.8, 1.0]


def test_cutoff_artifacts_and_reruns_are_identical(tmp_path):
    out_a, out_b = tmp_path / "a", tmp_path / "b"
    for out in (out_a, out_b):
        rc = main(["cutoff", "--out", str(out)])
        assert rc == 0
        assert not (out / ".onetr.lock").exists()
    files = ["cutoff_table.csv", "run_manifest.json"]
    for name in files:
        assert (out_a / name).read_bytes() == (out_b / name).read_bytes()
    with open(out_a / "cutoff_table.csv") as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["v_g", "g_m_cutoff"]
    assert len(rows) == 8  # header + 7 grid points


def test_manifest_has_no_volatile_fields(tmp_path):
    out = tmp_path / "run"
    assert main(["cutoff", "--out", str(out)]) == 0
    manifest = json.loads((out / "run_manifest.json").read_text())
    assert manifest["command"] == "cutoff"
    assert "toolkit_version" in manifest and "config" in manifest
    assert not any("time" in k or "date" in k for k in manifest)


def test_characterize_reports_linear_window(tmp_path):
    out = tmp_path / "run"
    rc = main(["characterize", "--gm", "1e-5", "--vg", "0.9",
               "--out", str(out)])
    assert rc == 0
    with open(out / "geff_curve.csv") as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["v_in", "g_eff"]
    assert len(rows) == 65
    window = json.loads((out / "linear_range.json").read_text())
    assert window["v_lo"] is not None
    assert window["v_lo"] < window["v_hi"]


def test_characterize_stressed_device(tmp_path):
    out = tmp_path / "run"
    rc = main(["characterize", "--gm", "1e-5", "--vg", "1.3",
               "--device", "stressed", "--out", str(out)])
    assert rc == 0
    window = json.loads((out / "linear_range.json").read_text())
    assert window["v_lo"] > 0.25  # leakage pushes the window up


def test_power_mc_table(tmp_path):
    out = tmp_path / "run"
    rc = main(["power-mc", "--vg", "0.8,1.0", "--rows", "4", "--cols", "4",
               "--samples", "8", "--out", str(out)])
    assert rc == 0
    with open(out / "power.csv") as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["v_g", "mean_power_W"]
    powers = [float(r[1]) for r in rows[1:]]
    assert len(powers) == 2 and all(p > 0 for p in powers)


def test_train_eval_cycle(tmp_path, trained_checkpoint, small_csvs):
    train_csv, test_csv = small_csvs
    metrics_path = Path(trained_checkpoint).with_name("metrics.json")
    metrics = json.loads(metrics_path.read_text())
    assert 0.0 <= metrics["test_accuracy"] <= 1.0

    out = tmp_path / "eval"
    rc = main(["eval", "--checkpoint", trained_checkpoint, "--out", str(out),
               "--data", train_csv, "--test-data", test_csv])
    assert rc == 0
    result = json.loads((out / "eval.json").read_text())
    assert result["mode"] == "software"
    assert result["accuracy"] == pytest.approx(metrics["test_accuracy"])


def test_search_vg_then_crossbar_eval(tmp_path, trained_checkpoint,
                                      small_csvs):
    train_csv, test_csv = small_csvs
    out = tmp_path / "search"
    rc = main(["search-vg", "--checkpoint", trained_checkpoint,
               "--out", str(out)])
    assert rc == 0
    schedule = json.loads((out / "schedule.json").read_text())
    assert schedule["mode"] == "heterogeneous"
    assert len(schedule["entries"]) == 2
    assert (out / "cutoff_table.csv").exists()

    out2 = tmp_path / "eval"
    rc = main(["eval", "--checkpoint", trained_checkpoint,
               "--mode", "crossbar", "--schedule", str(out / "schedule.json"),
               "--out", str(out2), "--data", train_csv,
               "--test-data", test_csv])
    assert rc == 0
    result = json.loads((out2 / "eval.json").read_text())
    assert result["mode"] == "crossbar"
    assert 0.0 <= result["accuracy"] <= 1.0


def test_neat_energy_report_cycle(tmp_path, trained_checkpoint, small_csvs):
    train_csv, test_csv = small_csvs
    out = tmp_path / "neat"
    rc = main(["neat", "--checkpoint", trained_checkpoint, "--out", str(out),
               "--iters", "2", "--epochs-per-iter", "1",
               "--data", train_csv, "--test-data", test_csv])
    assert rc == 0
    assert (out / "neat_checkpoint.json").exists()
    with open(out / "history.csv") as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["iteration", "accuracy", "linear_fraction"]
    assert len(rows) == 3

    out2 = tmp_path / "energy"
    rc = main(["energy", "--checkpoint", str(out / "neat_checkpoint.json"),
               "--out", str(out2), "--max-samples", "20",
               "--data", train_csv, "--test-data", test_csv])
    assert rc == 0
    energy = json.loads((out2 / "energy.json").read_text())
    assert energy["total_J"] > 0.0

    out3 = tmp_path / "report"
    rc = main(["report", "--checkpoint", trained_checkpoint,
               "--out", str(out3), "--max-samples", "20",
               "--data", train_csv, "--test-data", test_csv])
    assert rc == 0
    report = json.loads((out3 / "report.json").read_text())
    assert report["baseline"]["v_g"] == 1.0
    assert report["compare"]["v_g"] == 0.8
    assert "energy_gain_percent" in report


def test_locked_output_dir_is_an_io_error(tmp_path):
    out = tmp_path / "run"
    out.mkdir()
    (out / ".onetr.lock").touch()
    assert main(["cutoff", "--out", str(out)]) == 3


def test_usage_errors_exit_2(tmp_path):
    assert main(["cutoff", "--vg", "0.9:0.7:0.05",
                 "--out", str(tmp_path / "a")]) == 2
    assert main(["cutoff", "--vg", "abc", "--out", str(tmp_path / "b")]) == 2
    assert main(["no-such-command"]) == 2
    assert main(["characterize", "--gm", "1e-5"]) == 2  # missing --vg


def test_io_errors_exit_3(tmp_path):
    assert main(["eval", "--checkpoint", str(tmp_path / "missing.json"),
                 "--out", str(tmp_path / "run")]) == 3


def test_domain_errors_exit_4(tmp_path):
    assert main(["cutoff", "--tm", "1.5", "--out", str(tmp_path / "run")]) == 4
    assert main(["characterize", "--gm=-1e-5", "--vg", "0.9",
                 "--out", str(tmp_path / "run2")]) == 4
