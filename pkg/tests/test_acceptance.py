"""Acceptance gate: one test per criterion, each at its stated tolerance.

Run with ``pytest tests/test_acceptance.py``; the terminal summary lists one
PASS/FAIL line per criterion.
"""
import csv
import math
import shutil
import subprocess
import sys
import time

import numpy as np
import pytest

from erconf import kernels
from erconf.cli import main as cli_main
from erconf.conformal import calibrate_examples, coverage_check, predict_set, predict_sets, prediction_masks
from erconf.core import Examples, RandomSource, softmax, three_way_split
from erconf.data import REPORT_HEADER, SynthSpec, cross_entropy_and_grad, generate_synthetic
from erconf.oracles import brute_force_set, exact_coverage_distribution, random_tiny_instance
from erconf.reweight import ErConfig, entropy, entropy_from_logits
from erconf.scores import ScoreSpec, aps_score, raps_score
from erconf.temperature import TemperatureGrid, finalize, run_algorithm1, sweep_temperatures


def test_01_marginal_coverage(record):
    start = time.perf_counter()
    covs = []
    for t in range(100):
        d = generate_synthetic(SynthSpec(10, None, 2000, 2.5, 1.0, seed=t))
        ex = d.table.with_uniforms(RandomSource(t).child("u"))
        cal = calibrate_examples(ex.subset(slice(0, 1000)), 0.10, ScoreSpec("aps"))
        covs.append(coverage_check(cal, ex.subset(slice(1000, 2000))))
    elapsed = time.perf_counter() - start
    mean = float(np.mean(covs))
    exact = exact_coverage_distribution(1000, 0.10, 1).exact_mean
    ok = 0.895 <= mean <= 0.915 and elapsed < 30
    record(1, "marginal coverage", ok, f"mean={mean:.4f} exact={exact:.4f} band=[0.895,0.915] {elapsed:.1f}s")
    assert ok


def test_02_brute_force_equivalence(record):
    gen = np.random.default_rng(7)
    start = time.perf_counter()
    mismatches = 0
    for _ in range(1000):
        inst, z, u = random_tiny_instance(gen)
        alpha = float(gen.uniform(0.01, 0.99))
        spec = {"aps": ScoreSpec("aps"), "thr": ScoreSpec("thr")}.get(inst.kind) or ErConfig(inst.temperature)
        cal = calibrate_examples(Examples(np.array(inst.cal_logits), inst.cal_labels, inst.cal_u), alpha, spec)
        mismatches += predict_set(np.array(z), u, cal).members != brute_force_set(inst, z, u, alpha)
    elapsed = time.perf_counter() - start
    ok = mismatches == 0 and elapsed < 5
    record(2, "brute-force equivalence", ok, f"{mismatches} mismatches in 1000, {elapsed:.2f}s")
    assert ok


def test_03_raps_degeneracy(record):
    gen = np.random.default_rng(3)
    bad = 0
    for _ in range(100_000):
        k = int(gen.integers(2, 12))
        p = softmax(gen.normal(0, 2, k))
        y, u = int(gen.integers(0, k)), float(gen.random())
        bad += raps_score(p, y, u, lam=0.0, k_reg=int(gen.integers(0, k))) != aps_score(p, y, u)
    ok = bad == 0
    record(3, "RAPS with lambda=0 equals APS", ok, f"{bad} differences in 1e5 triples")
    assert ok


def test_04_entropy_identity(record):
    gen = np.random.default_rng(4)
    k = gen.integers(2, 20, 100_000)
    worst = 0.0
    for kk in np.unique(k):
        z = gen.uniform(-100, 100, (int(np.sum(k == kk)), int(kk)))
        worst = max(worst, float(np.max(np.abs(entropy_from_logits(z) - entropy(softmax(z))))))
    ok = worst < 1e-9
    record(4, "entropy identity", ok, f"max err {worst:.2e} on 1e5 vectors")
    assert ok


def _non_degenerate(gen, count, k=10):
    """Rows whose top-two logit gap is at least 0.1*H and whose logit range is at most 3.9*H.

    The gap rule puts the top class above 0.999 at T=0.01 for K <= 20. The
    range rule caps max-min at T=100 by tanh(range / (200 H)) < 0.02.
    """
    rows = []
    while len(rows) < count:
        z = gen.normal(0, 1, (4 * count, k))
        h = entropy_from_logits(z)
        s = np.sort(z, axis=1)
        keep = (s[:, -1] - s[:, -2] >= 0.1 * h) & (np.ptp(z, axis=1) <= 3.9 * h)
        rows.extend(z[keep])
    return np.array(rows[:count])


def test_05_er_limits(record):
    z = _non_degenerate(np.random.default_rng(5), 1000)
    cold = kernels.er_prob_rows(z, 0.01, 1e-10)
    hot = kernels.er_prob_rows(z, 100.0, 1e-10)
    order = np.argsort(-z, axis=1, kind="stable")
    ranks_ok = all(np.all(np.diff(np.take_along_axis(p, order, 1), axis=1) <= 0) for p in (cold, hot))
    ranks_ok &= all(
        np.all(np.diff(np.take_along_axis(kernels.er_prob_rows(z, t, 1e-10), order, 1), axis=1) <= 0)
        for t in (0.1, 1.0, 10.0)
    )
    top, spread = cold.max(axis=1).min(), np.ptp(hot, axis=1).max()
    ok = top > 0.999 and spread < 0.02 and ranks_ok
    record(5, "ER temperature limits", ok, f"min top@0.01={top:.5f} max spread@100={spread:.4f} ranks kept={ranks_ok}")
    assert ok


def _batch(seed: int, alpha: float):
    d = generate_synthetic(SynthSpec(10, None, 10_000, 3.5, 3.0, seed=seed))
    ex = d.table.with_uniforms(RandomSource(seed).child("u"))
    split = three_way_split(10_000, (0.5, 0.25, 0.25), RandomSource(seed).child("split"))
    hold, d2, d3 = ex.subset(split.i1), ex.subset(split.i2), ex.subset(split.i3)
    sweep = sweep_temperatures(d2, d3, alpha)
    er = finalize(d2.concat(d3), sweep.t_star, alpha)
    aps = calibrate_examples(d2.concat(d3), alpha, ScoreSpec("aps"))
    er_mask = prediction_masks(hold.logits, hold.u, er)
    aps_mask = prediction_masks(hold.logits, hold.u, aps)
    er_cov = float(er_mask[np.arange(len(hold)), hold.labels].mean())
    return float(er_mask.sum(1).mean()), float(aps_mask.sum(1).mean()), er_cov


def test_06_er_efficiency(record):
    start = time.perf_counter()
    ok = True
    details = []
    for alpha in (0.05, 0.10):
        res = [_batch(b, alpha) for b in range(10)]
        wins = sum(e <= a for e, a, _ in res)
        min_cov = min(c for _, _, c in res)
        ok &= wins >= 8 and min_cov >= 1 - alpha - 0.02
        details.append(
            f"a={alpha}: ER<=APS in {wins}/10, size {np.mean([r[0] for r in res]):.3f} vs "
            f"{np.mean([r[1] for r in res]):.3f}, min ER cov {min_cov:.3f}"
        )
    elapsed = time.perf_counter() - start
    ok &= elapsed < 120
    record(6, "ER efficiency vs APS", ok, "; ".join(details) + f"; {elapsed:.1f}s")
    assert ok


def test_07_collapse_and_determinism(record, tmp_path):
    d = generate_synthetic(SynthSpec(10, None, 3000, 3.5, 3.0, seed=11))
    ex = d.table.with_uniforms(RandomSource(11).child("u"))
    lab, hold = ex.subset(slice(0, 2000)), ex.subset(slice(2000, 3000))
    sweep, sets = run_algorithm1(
        lab, hold.logits, 0.1, TemperatureGrid((1.0,)), (0, 0.5, 0.5), RandomSource(11), unlabeled_u=hold.u
    )
    plain = calibrate_examples(lab, 0.1, ErConfig(1.0))
    collapse = sweep.final.threshold == plain.threshold and sets == predict_sets(hold.logits, hold.u, plain)

    assert cli_main(["synth", "--n", "2000", "--overconfidence", "3", "--seed", "4", "--out-dir", str(tmp_path)]) == 0
    reports = []
    for i in range(2):
        out = tmp_path / f"r{i}.csv"
        argv = ["evaluate", "--logits", str(tmp_path / "test.csv"), "--trials", "3", "--t-count", "9",
                "--seed", "9", "--out", str(out), "--jobs", "1"]
        assert cli_main(argv) == 0
        reports.append(out.read_bytes())
    same = reports[0] == reports[1]
    ok = collapse and same
    record(7, "grid {1.0} collapse and byte-identical reports", ok, f"collapse={collapse} identical={same}")
    assert ok


def test_08_nestedness(record):
    gen = np.random.default_rng(8)
    d = generate_synthetic(SynthSpec(10, None, 12_000, 2.5, 3.0, seed=8))
    ex = d.table.with_uniforms(RandomSource(8).child("u"))
    cal, test = ex.subset(slice(0, 2000)), ex.subset(slice(2000, 12_000))
    spec = ErConfig(float(gen.uniform(0.1, 5.0)))
    masks = [prediction_masks(test.logits, test.u, calibrate_examples(cal, a, spec)) for a in (0.01, 0.05, 0.10)]
    aps = [prediction_masks(test.logits, test.u, calibrate_examples(cal, a, ScoreSpec("aps"))) for a in (0.01, 0.05, 0.10)]
    violations = 0
    for m in (masks, aps):
        violations += int(np.sum(np.any(m[1] & ~m[0], axis=1) | np.any(m[2] & ~m[1], axis=1)))
    ok = violations == 0
    record(8, "nestedness across alpha", ok, f"{violations} violating points of 1e4 (ER and APS)")
    assert ok


def test_09_gradient_check(record):
    gen = np.random.default_rng(9)
    x, y = gen.normal(size=(8, 4)), np.array([0, 1, 2, 0, 1, 2, 2, 1])
    w, b = gen.normal(size=(4, 3)), gen.normal(size=3)
    _, gw, gb = cross_entropy_and_grad(w, b, x, y)
    eps, worst = 1e-6, 0.0
    for arr, grad in ((w, gw), (b, gb)):
        for idx in np.ndindex(arr.shape):
            old = arr[idx]
            arr[idx] = old + eps
            up = cross_entropy_and_grad(w, b, x, y)[0]
            arr[idx] = old - eps
            down = cross_entropy_and_grad(w, b, x, y)[0]
            arr[idx] = old
            worst = max(worst, abs((up - down) / (2 * eps) - grad[idx]))
    ok = worst < 1e-5
    record(9, "trainer gradient check", ok, f"max abs diff {worst:.2e}")
    assert ok


def _cli(*args):
    exe = shutil.which("erconf")
    cmd = [exe] if exe else [sys.executable, "-m", "erconf.cli"]
    return subprocess.run(cmd + [str(a) for a in args], capture_output=True, text=True)


def test_10_cli_end_to_end(record, tmp_path):
    start = time.perf_counter()
    s = _cli("synth", "--overconfidence", 3, "--seed", 0, "--out-dir", tmp_path)
    out = tmp_path / "report.csv"
    e = _cli("evaluate", "--logits", tmp_path / "test.csv", "--scores", "er,aps,raps,saps",
             "--alphas", "0.01,0.05,0.10", "--trials", 10, "--out", out)
    elapsed = time.perf_counter() - start
    rows = list(csv.reader(out.open())) if out.exists() else []
    ok = (
        s.returncode == 0
        and e.returncode == 0
        and rows[:1] == [REPORT_HEADER]
        and len(rows) - 1 == 120
        and elapsed < 180
    )
    record(10, "CLI synth -> evaluate", ok, f"{max(len(rows) - 1, 0)} rows, header ok={rows[:1] == [REPORT_HEADER]}, {elapsed:.1f}s")
    assert ok, e.stderr


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-q"]))
