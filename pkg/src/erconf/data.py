"""Logit files, report files, a synthetic Gaussian-mixture source and a small softmax trainer."""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .core import Examples, InvalidInputError, RandomSource, softmax


class ParseError(ValueError):
    def __init__(self, path, line: int, msg: str):
        super().__init__(f"{path}:{line}: {msg}")
        self.path = path
        self.line = line


class TrainingError(RuntimeError):
    pass


UNLABELED = -1
REPORT_HEADER = ["dataset", "score", "alpha", "trial", "coverage", "avg_size"]
SWEEP_HEADER = ["temperature", "avg_size", "coverage_d3", "threshold"]
CURVE_HEADER = ["dataset", "score", "alpha", "coverage_mean", "coverage_std", "size_mean", "size_std", "trials"]


@dataclass(frozen=True)
class LogitTable:
    """Rows of logits with optional labels (``-1`` marks an unlabeled row)."""

    logits: np.ndarray
    labels: np.ndarray

    def __post_init__(self):
        z = np.asarray(self.logits, dtype=np.float64)
        if z.ndim != 2:
            raise InvalidInputError(f"logits must be 2-d, got shape {z.shape}")
        labels = np.asarray(self.labels, dtype=np.int64).reshape(-1)
        if labels.shape[0] != z.shape[0]:
            raise InvalidInputError("labels and logits disagree on row count")
        if np.any(labels >= z.shape[1]) or np.any(labels < UNLABELED):
            raise InvalidInputError("labels out of range")
        if not np.all(np.isfinite(z)):
            raise InvalidInputError("logits must be finite")
        object.__setattr__(self, "logits", z)
        object.__setattr__(self, "labels", labels)

    @property
    def n_classes(self) -> int:
        return self.logits.shape[1]

    def __len__(self) -> int:
        return self.logits.shape[0]

    @property
    def is_labeled(self) -> bool:
        return bool(np.all(self.labels >= 0))

    def subset(self, idx) -> "LogitTable":
        return LogitTable(self.logits[idx], self.labels[idx])

    def with_uniforms(self, rng: RandomSource) -> Examples:
        return Examples(self.logits, self.labels, rng.generator().random(len(self)))

    @staticmethod
    def concat(tables: Sequence["LogitTable"]) -> "LogitTable":
        ks = {t.n_classes for t in tables}
        if len(ks) != 1:
            raise InvalidInputError(f"cannot pool tables with different K: {sorted(ks)}")
        return LogitTable(
            np.concatenate([t.logits for t in tables]),
            np.concatenate([t.labels for t in tables]),
        )


def load_logits(path, format: str = "csv") -> LogitTable:
    """Parse a ``label,z_0,...,z_{K-1}`` file. Errors carry the 1-based line number."""
    if format != "csv":
        raise ValueError(f"unsupported logit format {format!r}")
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ParseError(path, 1, "empty file, expected a header") from None
        k = len(header) - 1
        expected = ["label"] + [f"z_{j}" for j in range(k)]
        if k < 2 or header != expected:
            raise ParseError(path, 1, f"bad header {header!r}; expected label,z_0,...,z_{{K-1}} with K >= 2")
        labels, rows = [], []
        for line_no, rec in enumerate(reader, start=2):
            if not rec:
                continue
            if len(rec) != k + 1:
                raise ParseError(path, line_no, f"expected {k + 1} fields, got {len(rec)}")
            lab = rec[0].strip()
            if lab == "":
                labels.append(UNLABELED)
            else:
                try:
                    y = int(lab)
                except ValueError:
                    raise ParseError(path, line_no, f"label {lab!r} is not an integer") from None
                if not 0 <= y < k:
                    raise ParseError(path, line_no, f"label {y} outside 0..{k - 1}")
                labels.append(y)
            try:
                vals = [float(v) for v in rec[1:]]
            except ValueError as exc:
                raise ParseError(path, line_no, str(exc)) from None
            if not all(math.isfinite(v) for v in vals):
                raise ParseError(path, line_no, "non-finite logit")
            rows.append(vals)
    logits = np.array(rows, dtype=np.float64).reshape(len(rows), k)
    return LogitTable(logits, np.array(labels, dtype=np.int64))


def save_logits(table: LogitTable, path) -> None:
    path = Path(path)
    k = table.n_classes
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["label"] + [f"z_{j}" for j in range(k)])
        for y, row in zip(table.labels, table.logits):
            w.writerow(["" if y < 0 else int(y)] + [repr(float(v)) for v in row])


# -- synthetic data ---------------------------------------------------------


@dataclass(frozen=True)
class SynthSpec:
    """Spherical Gaussian mixture: class k has mean ``class_separation * e_k`` and unit covariance.

    ``overconfidence`` multiplies the Bayes log-posterior; 1 gives exactly
    calibrated logits, values above 1 an overconfident model.
    """

    n_classes: int = 10
    dim: int | None = None
    n: int = 1000
    class_separation: float = 3.5
    overconfidence: float = 1.0
    seed: int = 0

    def __post_init__(self):
        dim = self.n_classes if self.dim is None else self.dim
        object.__setattr__(self, "dim", dim)
        if self.n_classes < 2:
            raise InvalidInputError("need at least 2 classes")
        if dim < self.n_classes:
            raise InvalidInputError(f"dim ({dim}) must be >= number of classes ({self.n_classes})")
        if self.n < 1:
            raise InvalidInputError("n must be positive")
        if not self.class_separation > 0:
            raise InvalidInputError("class_separation must be > 0")
        if not self.overconfidence > 0:
            raise InvalidInputError("overconfidence must be > 0")


@dataclass(frozen=True)
class SyntheticData:
    table: LogitTable
    posteriors: np.ndarray
    features: np.ndarray


def generate_synthetic(spec: SynthSpec) -> SyntheticData:
    gen = RandomSource(spec.seed).child("synthetic").generator()
    k, d = spec.n_classes, spec.dim
    labels = gen.integers(0, k, size=spec.n)
    x = gen.standard_normal((spec.n, d))
    x[np.arange(spec.n), labels] += spec.class_separation
    # equal priors and shared covariance: log p(k|x) = sep * x_k - logsumexp
    score = spec.class_separation * x[:, :k]
    log_post = score - score.max(axis=1, keepdims=True)
    log_post -= np.log(np.exp(log_post).sum(axis=1, keepdims=True))
    posteriors = np.exp(log_post)
    logits = spec.overconfidence * log_post
    return SyntheticData(LogitTable(logits, labels), posteriors, x)


# -- softmax regression ------------------------------------------------------


def cross_entropy_and_grad(weights, bias, x, y, l2: float = 0.0):
    """Mean cross-entropy of a linear softmax model and its gradient."""
    n = x.shape[0]
    z = x @ weights + bias
    z = z - z.max(axis=1, keepdims=True)
    lse = np.log(np.exp(z).sum(axis=1))
    loss = float(np.mean(lse - z[np.arange(n), y])) + 0.5 * l2 * float(np.sum(weights**2))
    p = np.exp(z - lse[:, None])
    p[np.arange(n), y] -= 1.0
    p /= n
    return loss, x.T @ p + l2 * weights, p.sum(axis=0)


@dataclass
class SoftmaxClassifier:
    weights: np.ndarray
    bias: np.ndarray
    losses: list[float]

    def logits(self, x) -> np.ndarray:
        return np.asarray(x, dtype=np.float64) @ self.weights + self.bias

    def predict_proba(self, x) -> np.ndarray:
        return softmax(self.logits(x))


def train_softmax_classifier(
    features,
    labels,
    epochs: int = 200,
    lr: float = 0.1,
    seed: int = 0,
    n_classes: int | None = None,
    l2: float = 0.0,
) -> SoftmaxClassifier:
    """Multinomial logistic regression by full-batch gradient descent from zero weights.

    Zero initialisation with full batches consumes no randomness, so ``seed``
    has no effect on the fit; it is accepted so callers can pass one uniformly.
    """
    x = np.asarray(features, dtype=np.float64)
    y = np.asarray(labels, dtype=np.int64)
    if x.ndim != 2 or y.shape != (x.shape[0],):
        raise InvalidInputError(f"features {x.shape} and labels {y.shape} do not match")
    if not lr > 0:
        raise InvalidInputError("lr must be > 0")
    k = int(n_classes if n_classes is not None else y.max() + 1)
    w = np.zeros((x.shape[1], k))
    b = np.zeros(k)
    losses = []
    with np.errstate(over="ignore", invalid="ignore"):
        return _descend(x, y, w, b, losses, epochs, lr, l2)


def _descend(x, y, w, b, losses, epochs, lr, l2):
    for epoch in range(epochs):
        loss, gw, gb = cross_entropy_and_grad(w, b, x, y, l2)
        if not math.isfinite(loss):
            raise TrainingError(f"loss became non-finite at epoch {epoch}; try a smaller lr")
        losses.append(loss)
        w -= lr * gw
        b -= lr * gb
    if epochs:
        final, _, _ = cross_entropy_and_grad(w, b, x, y, l2)
        if not math.isfinite(final) or not np.all(np.isfinite(w)):
            raise TrainingError("training diverged; try a smaller lr")
        losses.append(final)
    return SoftmaxClassifier(w, b, losses)


# -- reports -----------------------------------------------------------------


def _fmt6(x: float) -> str:
    return f"{x:.6f}"


def save_report(rows: Iterable, path) -> None:
    """Write evaluation rows as ``dataset,score,alpha,trial,coverage,avg_size``."""
    rows = sorted(rows, key=lambda r: (r.dataset, r.score, r.alpha, r.trial))
    if not rows:
        raise ValueError("refusing to write an empty report")
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(REPORT_HEADER)
        for r in rows:
            w.writerow([r.dataset, r.score, _fmt6(r.alpha), r.trial, _fmt6(r.coverage), _fmt6(r.avg_size)])


def load_report(path) -> list[dict]:
    with Path(path).open(newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != REPORT_HEADER:
            raise ParseError(path, 1, f"bad report header {reader.fieldnames!r}")
        return [
            {
                "dataset": r["dataset"],
                "score": r["score"],
                "alpha": float(r["alpha"]),
                "trial": int(r["trial"]),
                "coverage": float(r["coverage"]),
                "avg_size": float(r["avg_size"]),
            }
            for r in reader
        ]


def save_curve(summary, path) -> None:
    """Per-(dataset, score, alpha) trial means: one coverage-vs-size point per alpha."""
    summary = sorted(summary, key=lambda s: (s.dataset, s.score, s.alpha))
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CURVE_HEADER)
        for s in summary:
            w.writerow([s.dataset, s.score, _fmt6(s.alpha), _fmt6(s.coverage_mean), _fmt6(s.coverage_std),
                        _fmt6(s.size_mean), _fmt6(s.size_std), s.trials])


def save_sweep(sweep, path) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(SWEEP_HEADER)
        for pt in sweep.per_t:
            w.writerow([repr(pt.temperature), _fmt6(pt.avg_size), _fmt6(pt.coverage_d3), repr(pt.threshold)])


def save_prediction_sets(sets, path) -> None:
    """One line per row, class indices joined by ';' (blank line = empty set)."""
    with Path(path).open("w", encoding="utf-8", newline="") as fh:
        fh.write("set\n")
        for s in sets:
            fh.write(";".join(str(c) for c in s.sorted()) + "\n")
