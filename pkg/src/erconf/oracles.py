"""Brute-force reference implementations for tests.

Nothing here calls into the scoring, kernel or calibration code. Every
quantity is recomputed with plain Python loops so that agreement with the
engine is evidence, not tautology. Speed is irrelevant; instances are tiny.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class TinyInstance:
    """A calibration set small enough to enumerate by hand.

    cal_logits: list of K-length logit lists (n_cal <= 6, K <= 3)
    cal_labels: true class of each calibration row
    cal_u:      randomizer of each calibration row
    kind:       "aps", "thr" or "er" (entropy-reweighted APS at ``temperature``)
    """

    cal_logits: tuple[tuple[float, ...], ...]
    cal_labels: tuple[int, ...]
    cal_u: tuple[float, ...]
    kind: str = "aps"
    temperature: float = 1.0

    def __post_init__(self):
        assert len(self.cal_logits) == len(self.cal_labels) == len(self.cal_u)
        assert 1 <= len(self.cal_logits) <= 6
        assert all(2 <= len(z) <= 3 for z in self.cal_logits)
        assert self.kind in ("aps", "thr", "er")


def _softmax(z):
    # shift by the max so exp never overflows
    m = max(z)
    e = [math.exp(v - m) for v in z]
    s = sum(e)
    return [v / s for v in e]


def _entropy(p):
    # 0 * log 0 is taken as 0
    return -sum(v * math.log(v) for v in p if v > 0)


def _reweighted(z, temperature, floor=1e-10):
    # divide logits by entropy * temperature, then softmax again
    h = max(_entropy(_softmax(z)), floor)
    return _softmax([v / (h * temperature) for v in z])


def _probs(z, inst: TinyInstance):
    if inst.kind == "er":
        return _reweighted(z, inst.temperature)
    return _softmax(z)


def _score(p, y, u, kind):
    if kind == "thr":
        return 1.0 - p[y]
    # APS: rank classes by probability, larger first, equal probabilities by index
    ranked = sorted(range(len(p)), key=lambda c: (-p[c], c))
    total = 0.0
    for c in ranked:
        if c == y:
            return total + u * p[c]
        total = total + p[c]
    raise AssertionError("unreachable")


def brute_force_set(inst: TinyInstance, test_logits, test_u: float, alpha: float) -> frozenset[int]:
    """Prediction set from the rank-counting definition, one candidate at a time.

    A candidate y is kept when fewer than n_alpha = ceil((1 - alpha)(n + 1))
    calibration scores lie strictly below its test score. That is exactly
    "test score <= n_alpha-th smallest calibration score", with the
    n_alpha > n case keeping every label.
    """
    n = len(inst.cal_labels)
    n_alpha = math.ceil((1.0 - alpha) * (n + 1) - 1e-9)
    kind = "thr" if inst.kind == "thr" else "aps"

    cal_scores = []
    for z, y, u in zip(inst.cal_logits, inst.cal_labels, inst.cal_u):
        cal_scores.append(_score(_probs(list(z), inst), y, u, kind))

    p_test = _probs(list(test_logits), inst)
    keep = set()
    for y in range(len(p_test)):
        a_test = _score(p_test, y, test_u, kind)
        below = 0
        for a in cal_scores:
            if a < a_test:
                below += 1
        if below < n_alpha:
            keep.add(y)
    return frozenset(keep)


def random_tiny_instance(gen: np.random.Generator, kind: str | None = None) -> tuple[TinyInstance, list[float], float]:
    """Random tiny instance plus a test logit vector and its randomizer."""
    k = int(gen.integers(2, 4))
    n = int(gen.integers(1, 7))
    kind = kind or ("aps", "thr", "er")[int(gen.integers(0, 3))]
    inst = TinyInstance(
        tuple(tuple(float(v) for v in gen.normal(0, 2, size=k)) for _ in range(n)),
        tuple(int(v) for v in gen.integers(0, k, size=n)),
        tuple(float(v) for v in gen.random(n)),
        kind,
        float(np.exp(gen.uniform(np.log(0.05), np.log(20)))),
    )
    return inst, [float(v) for v in gen.normal(0, 2, size=k)], float(gen.random())


@dataclass(frozen=True)
class CoverageDistribution:
    per_trial: np.ndarray
    mean: float
    exact_mean: float
    hist: np.ndarray
    edges: np.ndarray


def exact_coverage_distribution(n_cal: int, alpha: float, trials: int, seed: int = 0, bins: int = 20) -> CoverageDistribution:
    """Simulated coverage of the order-statistic threshold on i.i.d. U(0,1) scores.

    For each trial, draw n_cal calibration scores, take the n_alpha-th smallest
    as threshold Q, and record P(fresh score <= Q) = Q, the exact coverage
    conditional on that calibration draw (1 when n_alpha > n_cal). Averaged
    over calibration draws this is n_alpha / (n_cal + 1), returned as
    ``exact_mean`` for comparison.
    """
    gen = np.random.default_rng(seed)
    k = math.ceil((1.0 - alpha) * (n_cal + 1) - 1e-9)
    out = np.empty(trials)
    for t in range(trials):
        draws = sorted(gen.random(n_cal).tolist())
        out[t] = 1.0 if k > n_cal else draws[k - 1]
    hist, edges = np.histogram(out, bins=bins, range=(0.0, 1.0))
    return CoverageDistribution(out, float(out.mean()), min(k, n_cal + 1) / (n_cal + 1), hist, edges)
