import csv
import shutil
import subprocess
import sys

import pytest

from erconf.cli import main
from erconf.data import REPORT_HEADER, load_logits


def run(*argv):
    try:
        return main([str(a) for a in argv])
    except SystemExit as e:
        return e.code


@pytest.fixture(scope="module")
def synth_dir(tmp_path_factory):
    d = tmp_path_factory.mktemp("synth")
    assert run("synth", "--n", 2000, "--overconfidence", 3, "--seed", 1, "--out-dir", d) == 0
    return d


def test_synth_writes_files(synth_dir):
    for name in ("train", "cal", "test", "posteriors"):
        assert (synth_dir / f"{name}.csv").exists()
    assert len(load_logits(synth_dir / "cal.csv")) == 500


def test_synth_is_deterministic(tmp_path, synth_dir):
    assert run("synth", "--n", 2000, "--overconfidence", 3, "--seed", 1, "--out-dir", tmp_path) == 0
    for name in ("train", "cal", "test", "posteriors"):
        assert (tmp_path / f"{name}.csv").read_bytes() == (synth_dir / f"{name}.csv").read_bytes()


@pytest.mark.parametrize(
    "argv",
    [
        ("synth", "--overconfidence", "0"),
        ("synth", "--n", "-5"),
        ("synth", "--fractions", "0.5,0.5"),
        ("evaluate", "--logits", "x.csv", "--out", "r.csv", "--alphas", "1.5"),
        ("evaluate", "--logits", "x.csv", "--out", "r.csv", "--scores", "bogus"),
        ("sweep", "--d2", "a", "--d3", "b", "--out", "c", "--t-grid", "1,0.5"),
        ("sweep", "--d2", "a", "--d3", "b", "--out", "c", "--t-min", "5", "--t-max", "1"),
        ("frobnicate",),
    ],
)
def test_bad_flags_exit_2(argv, tmp_path, capsys):
    assert run(*argv) == 2


def test_help_exits_0(capsys):
    assert run("--help") == 0
    assert "evaluate" in capsys.readouterr().out


def test_missing_file_exits_1(tmp_path):
    assert run("evaluate", "--logits", tmp_path / "nope.csv", "--out", tmp_path / "r.csv") == 1


def test_evaluate_single_score(synth_dir, tmp_path):
    out = tmp_path / "r.csv"
    assert run("evaluate", "--logits", synth_dir / "test.csv", "--scores", "aps", "--alphas", "0.10",
               "--trials", 10, "--out", out, "--jobs", 1) == 0
    rows = list(csv.reader(out.open()))
    assert rows[0] == REPORT_HEADER and len(rows) == 11
    assert not (tmp_path / "r_sweeps").exists()


def test_evaluate_full_table_and_sweeps(synth_dir, tmp_path):
    out = tmp_path / "r.csv"
    assert run("evaluate", "--logits", synth_dir / "cal.csv", "--logits", synth_dir / "test.csv",
               "--dataset", "synth", "--trials", 10, "--t-count", 9, "--out", out, "--jobs", 1) == 0
    rows = list(csv.reader(out.open()))
    assert rows[0] == REPORT_HEADER and len(rows) == 1 + 4 * 3 * 10
    curve = list(csv.reader((tmp_path / "r_curve.csv").open()))
    assert curve[0][:4] == ["dataset", "score", "alpha", "coverage_mean"] and len(curve) == 1 + 4 * 3
    sweeps = sorted((tmp_path / "r_sweeps").glob("*.csv"))
    assert len(sweeps) == 3 * 10
    assert sweeps[0].read_text().splitlines()[0] == "temperature,avg_size,coverage_d3,threshold"
    assert len(sweeps[0].read_text().splitlines()) == 1 + 9


def test_evaluate_alpha_range(synth_dir, tmp_path):
    out = tmp_path / "r.csv"
    assert run("evaluate", "--logits", synth_dir / "test.csv", "--scores", "thr", "--alpha-range", "0.05:0.15:0.05",
               "--trials", 2, "--out", out, "--jobs", 1) == 0
    assert {r[2] for r in list(csv.reader(out.open()))[1:]} == {"0.050000", "0.100000", "0.150000"}


def test_sweep_singleton_grid(synth_dir, tmp_path, capsys):
    out = tmp_path / "s.csv"
    assert run("sweep", "--d2", synth_dir / "cal.csv", "--d3", synth_dir / "test.csv", "--t-grid", "1.0", "--out", out) == 0
    assert "T*=1 " in capsys.readouterr().out
    assert len(out.read_text().splitlines()) == 2


def test_sweep_default_grid(synth_dir, tmp_path):
    out = tmp_path / "s.csv"
    assert run("sweep", "--d2", synth_dir / "cal.csv", "--d3", synth_dir / "test.csv", "--out", out, "--jobs", 1) == 0
    assert len(out.read_text().splitlines()) == 1 + 41


def test_predict_tiny_alpha_gives_full_sets(synth_dir, tmp_path):
    out = tmp_path / "p.csv"
    assert run("predict", "--d2", synth_dir / "cal.csv", "--d3", synth_dir / "test.csv",
               "--unlabeled", synth_dir / "train.csv", "--alpha", "0.0001", "--out", out) == 0
    lines = out.read_text().splitlines()
    assert lines[0] == "set" and len(lines) == 1 + 1000
    assert all(line == ";".join(map(str, range(10))) for line in lines[1:])


@pytest.mark.parametrize("score", ["er", "aps"])
def test_predict_empty_unlabeled(synth_dir, tmp_path, score):
    empty = tmp_path / "u.csv"
    empty.write_text("label," + ",".join(f"z_{j}" for j in range(10)) + "\n")
    out = tmp_path / "p.csv"
    assert run("predict", "--d2", synth_dir / "cal.csv", "--d3", synth_dir / "test.csv", "--unlabeled", empty,
               "--score", score, "--t-grid", "1", "--out", out) == 0
    assert out.read_text() == "set\n"


def test_predict_class_mismatch_exits_1(synth_dir, tmp_path):
    bad = tmp_path / "u.csv"
    bad.write_text("label,z_0,z_1\n,0.1,0.2\n")
    assert run("predict", "--d2", synth_dir / "cal.csv", "--d3", synth_dir / "test.csv", "--unlabeled", bad,
               "--out", tmp_path / "p.csv") == 1


def test_config_echo(synth_dir, tmp_path, capsys):
    run("sweep", "--d2", synth_dir / "cal.csv", "--d3", synth_dir / "test.csv", "--t-grid", "1", "--out", tmp_path / "s")
    err = capsys.readouterr().err
    assert err.startswith("config ") and "alpha=0.1" in err


@pytest.mark.skipif(shutil.which("erconf") is None, reason="console script not installed")
def test_console_script():
    res = subprocess.run(["erconf", "--help"], capture_output=True, text=True)
    assert res.returncode == 0


def test_module_entry():
    res = subprocess.run([sys.executable, "-m", "erconf.cli", "synth", "--k", "1"], capture_output=True, text=True)
    assert res.returncode == 2 and "--k" in res.stderr
