"""Command line interface: outputs, determinism and exit codes."""

import csv
import json
import subprocess
import sys

import numpy as np
import pytest

from cgflow.cli import main
from cgflow.io import read_snapshot

RUN = """model = generic
scheme = approach3
grid.modes = 16, 16
time.dt = 1e-3
time.T = 1e-2
model.epsilon = 0.5
model.constraint = mass
ic.name = random_smooth
ic.kmax = 4
seed = 11
output.snapshot_stride = 5
"""


def _config(tmp_path, text, name="run.cfg"):
    p = tmp_path / name
    p.write_text(text)
    return p


def test_run_writes_series_and_snapshots(tmp_path):
    out = tmp_path / "out"
    assert main(["run", "--config", str(_config(tmp_path, RUN)), "--out", str(out)]) == 0
    with open(out / "series.csv") as fh:
        rows = list(csv.reader(fh))
    assert len(rows) == 11
    header = rows[0]
    assert header[:3] == ["t", "E_original", "E_discrete"]
    assert float(rows[-1][0]) == pytest.approx(1e-2)
    assert sorted(p.name for p in out.glob("*.cgf")) == [
        "snap_00000000.cgf", "snap_00000005.cgf", "snap_00000010.cgf"
    ]
    phi, t = read_snapshot(out / "snap_00000010.cgf")
    assert phi.shape == (1, 16, 16) and t == pytest.approx(1e-2)
    assert not (out / "failure.json").exists()
    assert (out / "config.txt").read_text().startswith("model = generic")


def test_series_stride(tmp_path):
    out = tmp_path / "out"
    cfg = _config(tmp_path, RUN + "output.series_stride = 5\n")
    assert main(["run", "--config", str(cfg), "--out", str(out)]) == 0
    assert len((out / "series.csv").read_text().splitlines()) == 3


def test_reruns_are_byte_identical(tmp_path):
    cfg = _config(tmp_path, RUN)
    for d in ("a", "b"):
        assert main(["run", "--config", str(cfg), "--out", str(tmp_path / d)]) == 0
    for name in ("series.csv", "snap_00000005.cgf", "snap_00000010.cgf"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_numerical_failure_exit_and_record(tmp_path):
    text = (
        "model = vesicle\nscheme = vesicle_bdf2\nscheme.approach = 2\ngrid.modes = 16, 16\n"
        "time.dt = 1.0\ntime.T = 5.0\nic.name = two_circles_2d\n"
    )
    out = tmp_path / "out"
    assert main(["run", "--config", str(_config(tmp_path, text)), "--out", str(out)]) == 1
    fail = json.loads((out / "failure.json").read_text())
    assert fail["step"] == 1 and fail["error"] == "MultiplierFailure"
    assert fail["multiplier"] == "eta/lambda"
    assert isinstance(fail["residual_trace"], list) and fail["residual_trace"]
    lines = (out / "series.csv").read_text().splitlines()
    assert len(lines) == 1  # header only, nothing truncated


def test_config_error_exit(tmp_path, capsys):
    text = RUN.replace("time.dt = 1e-3", "time.dt = 3e-3")
    assert main(["run", "--config", str(_config(tmp_path, text)), "--out", str(tmp_path / "o")]) == 2
    assert "integer multiple" in capsys.readouterr().err
    assert main(["run", "--config", str(tmp_path / "absent.cfg"), "--out", str(tmp_path / "o")]) == 2


def test_converge_subcommand(tmp_path):
    text = RUN.replace("time.T = 1e-2", "time.T = 8e-3").replace("ic.name = random_smooth\nic.kmax = 4\nseed = 11\n", "ic.name = smooth_trig\n")
    out = tmp_path / "conv"
    code = main(["converge", "--config", str(_config(tmp_path, text)), "--dts", "8e-4,4e-4,2e-4",
                 "--ref-dt", "1e-5", "--out", str(out)])
    assert code == 0
    summary = json.loads((out / "convergence.json").read_text())
    assert 1.8 <= summary["observed_order"] <= 2.2
    assert len((out / "convergence.csv").read_text().splitlines()) == 4


def test_compare_subcommand(tmp_path):
    out = tmp_path / "cmp"
    code = main(["compare", "--config", str(_config(tmp_path, RUN)), "--approaches", "2,3", "--out", str(out)])
    assert code == 0
    summary = json.loads((out / "comparison.json").read_text())
    assert "2-3" in summary["lambda_discrepancy"]
    assert (out / "series_2.csv").exists() and (out / "series_3.csv").exists()


def test_console_entry_point(tmp_path):
    cfg = _config(tmp_path, RUN)
    res = subprocess.run([sys.executable, "-m", "cgflow.cli", "run", "--config", str(cfg), "--out", str(tmp_path / "o")],
                         capture_output=True, text=True)
    assert res.returncode == 0, res.stderr
    data = np.loadtxt(tmp_path / "o" / "series.csv", delimiter=",", skiprows=1, usecols=(0,))
    assert np.all(np.diff(data) > 0)
