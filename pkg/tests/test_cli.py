import csv
import json
import math
import subprocess
import sys

import numpy as np
import pytest

from dphawkes.cli import EXIT_CONFIG, EXIT_NUMERICAL, EXIT_OK, main
from dphawkes.optimizers import PrivacyBudget, calibrate_pgd


@pytest.fixture
def bins_file(tmp_path):
    events = tmp_path / "events.csv"
    assert main(["simulate", "--model", "paper-2d", "--events", "400", "--seed", "3", "--output", str(events)]) == EXIT_OK
    bins = tmp_path / "bins.csv"
    assert main(["discretize", "--delta", "0.5", "--lag", "8", "--input", str(events), "--output", str(bins)]) == EXIT_OK
    return bins


def test_simulate_writes_csv(tmp_path):
    out = tmp_path / "ev.csv"
    assert main(["simulate", "--model", "paper-4d", "--horizon", "20", "--seed", "1", "--output", str(out)]) == EXIT_OK
    rows = list(csv.reader(out.open()))
    assert rows[0] == ["dim", "time"]
    times = [float(r[1]) for r in rows[1:]]
    assert times == sorted(times) and 0 < times[0] and times[-1] <= 20


def test_simulate_deterministic(tmp_path):
    args = ["simulate", "--model", "paper-2d", "--horizon", "50", "--seed", "9", "--output"]
    main(args + [str(tmp_path / "a.csv")])
    main(args + [str(tmp_path / "b.csv")])
    assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()


def test_discretize_counts(bins_file):
    rows = list(csv.reader(bins_file.open()))
    assert rows[0] == ["x0", "x1"]
    assert all(int(x) >= 0 for r in rows[1:] for x in r)


@pytest.mark.parametrize("method,extra", [("pgd", ["--radius", "0.1", "--sigma2", "1.0"]), ("cg", ["--radius", "2.5", "--epsilon", "5"]), ("cls", [])])
def test_estimate_methods(tmp_path, bins_file, method, extra):
    out = tmp_path / "est.json"
    args = ["estimate", "--method", method, "--bins", str(bins_file), "--bin-width", "0.5", "--lag", "8", "--iters", "100", "--R", "4", "--seed", "2", "--out", str(out)]
    assert main(args + extra) == EXIT_OK
    obj = json.loads(out.read_text())
    for key in ["theta", "H_blocks", "eta", "delta_bin", "lag", "sigma2", "epsilon", "delta", "K", "seed", "method"]:
        assert key in obj
    assert np.array(obj["theta"]).shape == (2, 17)
    assert np.array(obj["H_blocks"]).shape == (8, 2, 2)
    assert obj["method"] == method


def test_estimate_epsilon_calibration(tmp_path, bins_file):
    out = tmp_path / "est.json"
    main(["estimate", "--method", "pgd", "--bins", str(bins_file), "--bin-width", "0.5", "--lag", "8", "--epsilon", "2", "--delta", "1e-5", "--iters", "50", "--radius", "0.1", "--R", "4", "--out", str(out)])
    obj = json.loads(out.read_text())
    assert obj["sigma2"] == calibrate_pgd(PrivacyBudget(2.0, 1e-5, 50), 0.1, 4.0).sigma2
    assert obj["epsilon"] == 2.0


def test_estimate_warns_without_R(tmp_path, bins_file, caplog):
    out = tmp_path / "est.json"
    assert main(["estimate", "--method", "pgd", "--bins", str(bins_file), "--bin-width", "0.5", "--lag", "8", "--sigma2", "0", "--iters", "10", "--radius", "0.1", "--out", str(out)]) == EXIT_OK
    assert "voids the privacy guarantee" in caplog.text


def test_estimate_config_errors(tmp_path, bins_file):
    base = ["estimate", "--bins", str(bins_file), "--bin-width", "0.5", "--lag", "8", "--out", str(tmp_path / "e.json")]
    assert main(base + ["--method", "pgd", "--sigma2", "1"]) == EXIT_CONFIG
    assert main(base + ["--method", "pgd", "--radius", "0.1", "--sigma2", "1", "--epsilon", "1"]) == EXIT_CONFIG
    assert main(base + ["--method", "cls", "--lag", "0"]) == EXIT_CONFIG
    assert main(["estimate", "--method", "cls", "--bins", str(tmp_path / "missing.csv"), "--bin-width", "0.5", "--lag", "8", "--out", "x"]) == EXIT_CONFIG


def test_estimate_singular_is_numerical(tmp_path):
    bins = tmp_path / "b.csv"
    bins.write_text("x0,x1\n" + "1,0\n" * 30)
    assert main(["estimate", "--method", "cls", "--bins", str(bins), "--bin-width", "1", "--lag", "2", "--out", str(tmp_path / "e.json")]) == EXIT_NUMERICAL


def test_accountant_both_directions(capsys):
    assert main(["accountant", "--method", "pgd", "--epsilon", "2", "--delta", "0.36787944117144233", "--iters", "1", "--radius", "1", "--R", "1"]) == EXIT_OK
    out = capsys.readouterr().out.strip()
    assert out.startswith("sigma2=")
    assert float(out.split("=")[1]) == pytest.approx(2.0, rel=1e-15)
    assert main(["accountant", "--method", "cg", "--sigma2", "8", "--delta", "0.36787944117144233", "--iters", "1", "--radius", "1", "--R", "1"]) == EXIT_OK
    out = capsys.readouterr().out.strip()
    assert float(out.split("=")[1]) == pytest.approx(4.0, rel=1e-15)


def test_accountant_non_private(capsys):
    main(["accountant", "--method", "pgd", "--sigma2", "0", "--iters", "10", "--radius", "1", "--R", "1"])
    assert "inf" in capsys.readouterr().out


def test_accountant_usage_errors():
    assert main(["accountant", "--method", "pgd", "--epsilon", "1", "--iters", "10"]) == EXIT_CONFIG
    assert main(["accountant", "--method", "pgd", "--iters", "10", "--radius", "1", "--R", "1"]) == EXIT_CONFIG
    with pytest.raises(SystemExit) as info:
        main(["accountant", "--method", "sgd"])
    assert info.value.code == EXIT_CONFIG


def test_recover(tmp_path, bins_file):
    est = tmp_path / "est.json"
    main(["estimate", "--method", "cls", "--bins", str(bins_file), "--bin-width", "0.5", "--lag", "8", "--out", str(est)])
    out = tmp_path / "metrics.csv"
    assert main(["recover", "--estimate", str(est), "--truth", "paper-2d", "--out", str(out)]) == EXIT_OK
    rows = list(csv.reader(out.open()))
    assert rows[0] == ["i", "j", "grid_t", "h_hat", "h_true"]
    assert len(rows) == 1 + 8 * 4 + 1
    assert rows[-1][:2] == ["summary", "relative_error"]
    assert 0 < float(rows[-1][3]) < math.inf
    assert main(["recover", "--estimate", str(est), "--truth", "paper-4d", "--out", str(out)]) == EXIT_CONFIG


def sweep_config(tmp_path):
    cfg = {
        "model": "paper-2d",
        "delta_bins": [0.5],
        "noise_grid": [0.0, 0.1],
        "method": "pgd",
        "target_events": 200,
        "support": 4.0,
        "radius": 0.2,
        "iterations": 30,
        "replicates": 2,
        "master_seed": 11,
        "R": 4.0,
    }
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps(cfg))
    return path


def test_sweep_and_overlay(tmp_path):
    cfg = sweep_config(tmp_path)
    assert main(["sweep", "--config", str(cfg), "--output-dir", str(tmp_path / "run1")]) == EXIT_OK
    assert main(["sweep", "--config", str(cfg), "--output-dir", str(tmp_path / "run2")]) == EXIT_OK
    assert (tmp_path / "run1" / "results.csv").read_bytes() == (tmp_path / "run2" / "results.csv").read_bytes()
    out = tmp_path / "overlay.csv"
    assert main(["overlay", "--config", str(cfg), "--entry", "0,1", "--interpolation", "linear", "--out", str(out)]) == EXIT_OK
    rows = list(csv.reader(out.open()))
    assert rows[0] == ["t", "h_true", "h_hat"] and len(rows) == 201
    assert main(["overlay", "--config", str(cfg), "--entry", "0;1", "--out", str(out)]) == EXIT_CONFIG
    assert main(["overlay", "--config", str(cfg), "--entry", "5,1", "--out", str(out)]) == EXIT_CONFIG


def test_sweep_bad_config(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    assert main(["sweep", "--config", str(bad)]) == EXIT_CONFIG
    bad.write_text(json.dumps({"model": "paper-2d", "delta_bins": [0.5], "noise_grid": []}))
    assert main(["sweep", "--config", str(bad)]) == EXIT_CONFIG


def test_module_entry_point(tmp_path):
    proc = subprocess.run(
        [sys.executable, "-m", "dphawkes", "accountant", "--method", "pgd", "--epsilon", "1", "--iters", "10", "--radius", "0.1", "--R", "2"],
        capture_output=True,
        text=True,
    )
    assert proc.returncode == 0 and proc.stdout.startswith("sigma2=")
    proc = subprocess.run([sys.executable, "-m", "dphawkes", "nonsense"], capture_output=True, text=True)
    assert proc.returncode == EXIT_CONFIG
