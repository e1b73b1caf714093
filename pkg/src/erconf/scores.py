"""Conformity scores on probability vectors. Lower score = more conforming.

Single-label functions follow the textbook formulas on one probability
vector; :func:`score_all_labels` and :func:`score_matrix` evaluate every
candidate label at once through the row kernels. Both paths accumulate the
sorted head sum left to right, so they agree bit for bit.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import kernels
from .core import InvalidInputError, descending_order

KIND_CODES = {
    "thr": kernels.THR,
    "aps": kernels.APS,
    "raps": kernels.RAPS,
    "saps": kernels.SAPS,
    "rank": kernels.RANK,
}

RAPS_DEFAULT_LAMBDA = 0.01
RAPS_DEFAULT_KREG = 1
SAPS_DEFAULT_LAMBDA = 0.2


@dataclass(frozen=True)
class ScoreSpec:
    """Which conformity score to use, plus its hyperparameters.

    ``lam`` defaults to 0.01 for RAPS and 0.2 for SAPS; ``k_reg`` only
    matters for RAPS. With ``randomized=False`` every randomizer is set to 1.
    """

    kind: str = "aps"
    lam: float | None = None
    k_reg: int = RAPS_DEFAULT_KREG
    randomized: bool = True

    def __post_init__(self):
        kind = self.kind.lower()
        if kind not in KIND_CODES:
            raise InvalidInputError(f"unknown score kind {self.kind!r}; choose from {sorted(KIND_CODES)}")
        object.__setattr__(self, "kind", kind)
        lam = self.lam
        if lam is None:
            lam = {"raps": RAPS_DEFAULT_LAMBDA, "saps": SAPS_DEFAULT_LAMBDA}.get(kind, 0.0)
        if lam < 0 or (kind == "saps" and lam <= 0):
            raise InvalidInputError(f"invalid lambda {lam} for {kind}")
        if self.k_reg < 0:
            raise InvalidInputError(f"k_reg must be >= 0, got {self.k_reg}")
        object.__setattr__(self, "lam", float(lam))

    @property
    def code(self) -> int:
        return KIND_CODES[self.kind]

    @property
    def name(self) -> str:
        return self.kind

    def effective_u(self, u):
        return u if self.randomized else np.ones_like(np.asarray(u, dtype=np.float64))


def _check(p, y):
    p = np.asarray(p, dtype=np.float64)
    if p.ndim != 1:
        raise InvalidInputError(f"expected one probability vector, got shape {p.shape}")
    if not 0 <= y < p.shape[0]:
        raise InvalidInputError(f"label {y} out of range for K={p.shape[0]}")
    return p


def _head_and_rank(p, y):
    """Sum of the probabilities ranked strictly above ``y``, and y's 1-based rank."""
    order = descending_order(p)
    head = 0.0
    for r, c in enumerate(order, start=1):
        if c == y:
            return head, r, order
        head = head + float(p[c])
    raise AssertionError("label not found in ordering")


def thr_score(p, y: int) -> float:
    p = _check(p, y)
    return 1.0 - float(p[y])


def aps_score(p, y: int, u: float) -> float:
    p = _check(p, y)
    head, _, _ = _head_and_rank(p, y)
    return head + u * float(p[y])


def raps_score(p, y: int, u: float, lam: float, k_reg: int) -> float:
    """APS plus ``lam`` for every class ranked above ``y`` beyond position ``k_reg``.

    The randomized term on y itself is never penalised.
    """
    p = _check(p, y)
    head, r, _ = _head_and_rank(p, y)
    return (head + u * float(p[y])) + lam * max(r - 1 - k_reg, 0)


def saps_score(p, y: int, u: float, lam: float) -> float:
    p = _check(p, y)
    _, r, order = _head_and_rank(p, y)
    top = float(p[order[0]])
    if r == 1:
        return u * top
    return top + (r - 2 + u) * lam


def rank_score(p, y: int) -> float:
    p = _check(p, y)
    _, r, _ = _head_and_rank(p, y)
    return r / p.shape[0]


def label_score(p, y: int, u: float, spec: ScoreSpec) -> float:
    """Dispatch one (p, y, u) triple to the score named by ``spec``."""
    u = u if spec.randomized else 1.0
    if spec.kind == "thr":
        return thr_score(p, y)
    if spec.kind == "aps":
        return aps_score(p, y, u)
    if spec.kind == "raps":
        return raps_score(p, y, u, spec.lam, spec.k_reg)
    if spec.kind == "saps":
        return saps_score(p, y, u, spec.lam)
    return rank_score(p, y)


def score_all_labels(p, u: float, spec: ScoreSpec) -> np.ndarray:
    """Score of every candidate label for one probability vector, sharing ``u``."""
    p = np.asarray(p, dtype=np.float64)
    return score_matrix(p[None, :], np.array([u]), spec)[0]


def score_matrix(probs, u, spec: ScoreSpec) -> np.ndarray:
    """(n, K) scores for a batch of probability rows with per-row randomizers."""
    u = spec.effective_u(np.asarray(u, dtype=np.float64))
    return kernels.score_matrix(probs, u, spec.code, spec.lam, spec.k_reg)


def true_label_scores(probs, labels, u, spec: ScoreSpec) -> np.ndarray:
    u = spec.effective_u(np.asarray(u, dtype=np.float64))
    return kernels.label_scores(probs, labels, u, spec.code, spec.lam, spec.k_reg)
