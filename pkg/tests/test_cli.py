import csv
import io
import json
import subprocess
import sys

import numpy as np
import pytest

from bandsparse.cli import main, read_series, InputError


def write_series(path, t, y, header="time,re,im"):
    rows = np.column_stack([t, y.real, y.imag])
    path.write_text(header + "\n" + "\n".join(",".join(repr(float(v)) for v in r) for r in rows))
    return path


def read_csv(path):
    return list(csv.DictReader(io.StringIO(path.read_text())))


@pytest.fixture
def tone_file(tmp_path):
    t = np.arange(64)
    return write_series(tmp_path / "tone.csv", t, 2.0 * np.exp(2j * np.pi * 0.375 * t))


# -- input parsing

def test_read_series_sorts_times(tmp_path):
    t = np.array([2.0, 0.0, 1.0])
    y = np.array([3, 1, 2], dtype=complex)
    data, scheme = read_series(write_series(tmp_path / "s.csv", t, y))
    np.testing.assert_array_equal(data, [1, 2, 3])
    np.testing.assert_array_equal(scheme.times[0], [0, 1, 2])


def test_read_series_two_dimensional(tmp_path):
    n1, n2 = np.meshgrid(np.arange(3), np.arange(2), indexing="ij")
    vals = (n1 + 10 * n2).astype(complex)
    rows = np.column_stack([n1.ravel(), n2.ravel(), vals.real.ravel(), vals.imag.ravel()])
    p = tmp_path / "grid.csv"
    p.write_text("n1,n2,re,im\n" + "\n".join(",".join(str(v) for v in r) for r in rows[::-1]))
    data, scheme = read_series(p)
    assert scheme.shape == (3, 2)
    np.testing.assert_array_equal(data, vals.ravel(order="F"))


@pytest.mark.parametrize("text", ["", "time,re,im\n", "time,re\n0,1\n", "time,re,im\n0,a,1\n",
                                  "time,re,im\n0,1,0\n0,2,0\n", "n1,n2,re,im\n0,0,1,0\n1,1,1,0\n"])
def test_read_series_rejects_bad_files(tmp_path, text):
    p = tmp_path / "bad.csv"
    p.write_text(text)
    with pytest.raises(InputError):
        read_series(p)


# -- estimate

def test_estimate_single_tone(tmp_path, tone_file, capsys):
    out = tmp_path / "out"
    code = main(["estimate", "--input", str(tone_file), "--stages", "8,8",
                 "--out", str(out), "--format", "csv"])
    assert code == 0
    rows = read_csv(out / "frequencies.csv")
    assert len(rows) == 1
    assert float(rows[0]["f1"]) == pytest.approx(0.375, abs=1 / 64)
    assert float(rows[0]["magnitude"]) == pytest.approx(2.0, rel=0.05)
    result = json.loads((out / "result.json").read_text())
    assert result["model_order"] == 1
    config = json.loads((out / "estimate_config.json").read_text())
    assert config["stages"] == "8,8"
    assert "model order: 1" in capsys.readouterr().out
    assert not list(out.glob(".*.tmp"))


def test_estimate_empty_file_is_usage_error(tmp_path, capsys):
    p = tmp_path / "empty.csv"
    p.write_text("")
    assert main(["estimate", "--input", str(p), "--out", str(tmp_path)]) == 2
    assert "expected a header" in capsys.readouterr().err


def test_estimate_spice_dispatch(tmp_path, tone_file):
    out = tmp_path / "spice"
    assert main(["estimate", "--input", str(tone_file), "--stages", "8,4", "--solver", "spice",
                 "--out", str(out)]) == 0
    result = json.loads((out / "result.json").read_text())
    assert result["stages"][0]["lambda"] is None
    assert "noise" not in result


def test_estimate_no_active_bands_reports_zero(tmp_path):
    p = write_series(tmp_path / "zero.csv", np.arange(16), np.zeros(16, dtype=complex))
    out = tmp_path / "z"
    assert main(["estimate", "--input", str(p), "--stages", "4,2", "--out", str(out)]) == 0
    assert json.loads((out / "result.json").read_text())["model_order"] == 0
    assert json.loads((out / "frequencies.json").read_text()) == []


def test_config_file_and_flag_precedence(tmp_path, tone_file):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"input": str(tone_file), "plan": {"stages": "4,4", "alpha": [0.5]},
                               "out": str(tmp_path / "from_config")}))
    assert main(["estimate", "--config", str(cfg), "--stages", "8,2"]) == 0
    echo = json.loads((tmp_path / "from_config" / "estimate_config.json").read_text())
    assert echo["stages"] == "8,2"
    assert echo["alpha"] == [0.5]


def test_bad_stage_spec(tmp_path, tone_file):
    assert main(["estimate", "--input", str(tone_file), "--stages", "8,x",
                 "--out", str(tmp_path)]) == 2
    assert main(["estimate", "--input", str(tone_file), "--stages", "1",
                 "--out", str(tmp_path)]) == 2


# -- scan

def _fig_fixture(tmp_path):
    t = np.arange(100)
    y = np.exp(2j * np.pi * 0.2 * t) + np.exp(2j * np.pi * 0.51 * t)
    return write_series(tmp_path / "two.csv", t, y)


def test_scan_narrowband_and_wideband(tmp_path):
    out = tmp_path / "scan"
    assert main(["scan", "--input", str(_fig_fixture(tmp_path)), "--P", "50", "--B", "50",
                 "--normalize", "--out", str(out), "--format", "csv"]) == 0
    rows = read_csv(out / "scan.csv")
    nb = {int(r["index"]): float(r["magnitude"]) for r in rows if r["kind"] == "narrowband"}
    wb = {int(r["index"]): float(r["magnitude"]) for r in rows if r["kind"] == "wideband"}
    assert len(nb) == 50 and len(wb) == 50
    assert max(nb[25], nb[26]) < 0.2
    assert wb[25] > 0.5 and wb[10] > 0.5


def test_scan_zero_input(tmp_path):
    p = write_series(tmp_path / "z.csv", np.arange(10), np.zeros(10, dtype=complex))
    out = tmp_path / "scan"
    assert main(["scan", "--input", str(p), "--out", str(out), "--format", "csv",
                 "--scan-kind", "wideband", "--B", "5"]) == 0
    assert all(float(r["magnitude"]) == 0 for r in read_csv(out / "scan.csv"))


def test_scan_incomplete_grid_is_usage_error(tmp_path):
    p = tmp_path / "g.csv"
    p.write_text("n1,n2,re,im\n0,0,1,0\n1,1,1,0\n0,1,1,0\n")
    assert main(["scan", "--input", str(p), "--out", str(tmp_path)]) == 2


# -- costs

def test_costs_ratio(capsys):
    assert main(["costs", "--ratio", "--B", "20", "--N", "100"]) == 0
    assert json.loads(capsys.readouterr().out)["band_ratio"] == 0.675


def test_costs_budget(capsys):
    assert main(["costs", "--budget", "--P", "1000", "--N", "100", "--K", "5", "--eta", "0.667",
                 "--stages", "4"]) == 0
    grid = json.loads(capsys.readouterr().out)["zoom_budget"]["grid"]
    assert 1e-10 < grid < 1e-8


def test_costs_recommend(capsys):
    assert main(["costs", "--recommend", "--N", "300", "--stages", "2"]) == 0
    rec = json.loads(capsys.readouterr().out)["recommend_bands"]
    assert rec["band_ratio"] > 0.66 and rec["smallest_band_ratio"] > 0.66


def test_costs_missing_parameter(capsys):
    assert main(["costs", "--ratio", "--B", "20"]) == 2
    assert "--N" in capsys.readouterr().err


# -- experiment

def test_experiment_table1(tmp_path):
    out = tmp_path / "t1"
    assert main(["experiment", "table1", "--out", str(out), "--format", "csv"]) == 0
    rows = read_csv(out / "table1_plot.csv")
    assert [round(float(r["y"]), 3) for r in rows] == [0.001, 0.015, 0.001]
    assert len(read_csv(out / "table1_stats.csv")) == 3


def test_experiment_fig7_grid(tmp_path):
    out = tmp_path / "f7"
    assert main(["experiment", "fig7", "--k", "3", "--trials", "2", "--jobs", "1",
                 "--param", "Ns=[30, 40]", "--param", "ratios=[0.5, 1.0]", "--out", str(out)]) == 0
    rows = read_csv(out / "fig7_plot.csv")
    assert len(rows) == 4
    assert all(0 <= float(r["y"]) <= 1 for r in rows)


def test_experiment_deterministic(tmp_path):
    args = ["experiment", "fig8_lasso", "--trials", "3", "--seed", "7", "--snr-db", "20",
            "--param", "N=80", "--jobs", "1"]
    assert main(args + ["--out", str(tmp_path / "a")]) == 0
    assert main(args + ["--out", str(tmp_path / "b")]) == 0
    a = json.loads((tmp_path / "a" / "fig8_lasso.json").read_text())
    b = json.loads((tmp_path / "b" / "fig8_lasso.json").read_text())
    for rep in (a, b):
        rep.pop("wall_time")
        for r in rep["rows"]:
            r.pop("time")
        for s in rep["stats"]:
            s.pop("mean_time")
    assert a == b and a["seed"] == 7


def test_seed_from_environment(tmp_path, monkeypatch):
    monkeypatch.setenv("BANDSPARSE_SEED", "42")
    out = tmp_path / "env"
    assert main(["experiment", "fig8_lasso", "--trials", "1", "--param", "N=60",
                 "--snr-db", "20", "--jobs", "1", "--out", str(out)]) == 0
    assert json.loads((out / "fig8_lasso.json").read_text())["seed"] == 42


def test_unknown_experiment_exit_code(tmp_path):
    assert main(["experiment", "fig99", "--out", str(tmp_path)]) == 2


def test_unknown_experiment_parameter(tmp_path):
    assert main(["experiment", "table1", "--param", "bogus=1", "--out", str(tmp_path)]) == 2


def test_usage_errors_exit_two():
    assert main([]) == 2
    assert main(["estimate", "--solver", "omp"]) == 2


def test_console_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "bandsparse.cli", "costs", "--admm",
                           "--N", "100", "--P", "2"], capture_output=True, text=True)
    assert proc.returncode == 0
    assert json.loads(proc.stdout)["admm_cost"] == 612


def test_numeric_failure_exit_code(tmp_path, tone_file, capsys):
    # 64 samples x 40000 columns is over the default dictionary ceiling
    assert main(["estimate", "--input", str(tone_file), "--stages", "40000",
                 "--out", str(tmp_path)]) == 1
    assert "numerical failure" in capsys.readouterr().err
