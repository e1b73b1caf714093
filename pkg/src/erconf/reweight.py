"""Entropy-reweighted probabilities and conformity scores.

Logits are divided by ``max(H, entropy_floor) * temperature`` before the
softmax, where ``H`` is the Shannon entropy (nats) of the model's own
predictive distribution. Confident rows get sharper, uncertain rows flatter.
The floor keeps saturated (H = 0) rows finite; they come out one-hot.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .core import InvalidInputError, as_logits, softmax
from .scores import ScoreSpec, label_score, score_matrix, true_label_scores

DEFAULT_ENTROPY_FLOOR = 1e-10


@dataclass(frozen=True)
class ErConfig:
    temperature: float = 1.0
    entropy_floor: float = DEFAULT_ENTROPY_FLOOR
    base: ScoreSpec = field(default_factory=ScoreSpec)

    def __post_init__(self):
        if not self.temperature > 0:
            raise InvalidInputError(f"temperature must be > 0, got {self.temperature}")
        if not self.entropy_floor > 0:
            raise InvalidInputError(f"entropy_floor must be > 0, got {self.entropy_floor}")

    @property
    def name(self) -> str:
        return "er"

    def with_temperature(self, t: float) -> "ErConfig":
        return ErConfig(t, self.entropy_floor, self.base)


def entropy(p):
    """Shannon entropy in nats, with 0 log 0 taken as 0. Rows of a 2-d input give an array."""
    p = np.asarray(p, dtype=np.float64)
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = np.where(p > 0, p * np.log(p), 0.0)
    h = -terms.sum(axis=-1)
    return float(h) if p.ndim == 1 else h


def entropy_from_logits(z):
    """Entropy of softmax(z) as ``logsumexp(z) - sum_k f_k z_k``, max-shifted.

    Accepts one logit vector (returns a float) or a batch (returns an array).
    """
    z = as_logits(z)
    if z.ndim == 1:
        return float(kernels.entropy_rows(z[None, :])[0])
    return kernels.entropy_rows(z)


def reweight_logits(z, cfg: ErConfig) -> np.ndarray:
    z = as_logits(z)
    h = np.maximum(np.atleast_1d(entropy_from_logits(z)), cfg.entropy_floor)
    if z.ndim == 1:
        return z * (1.0 / (h[0] * cfg.temperature))
    return z * (1.0 / (h * cfg.temperature))[:, None]


def er_probability(z, cfg: ErConfig) -> np.ndarray:
    z = as_logits(z)
    if z.ndim == 1:
        return kernels.er_prob_rows(z[None, :], cfg.temperature, cfg.entropy_floor)[0]
    return kernels.er_prob_rows(z, cfg.temperature, cfg.entropy_floor)


def er_conformity_score(z, y: int, u: float, cfg: ErConfig) -> float:
    """Base score (APS unless configured otherwise) on the reweighted probabilities."""
    return label_score(er_probability(z, cfg), y, u, cfg.base)


def probabilities(logits, spec) -> np.ndarray:
    """Row probabilities a score is evaluated on: softmax, or the ER reweighting."""
    if isinstance(spec, ErConfig):
        return er_probability(logits, spec)
    return softmax(logits)


def base_spec(spec) -> ScoreSpec:
    return spec.base if isinstance(spec, ErConfig) else spec


def batch_scores(logits, u, spec) -> np.ndarray:
    """(n, K) candidate-label scores for a plain score spec or an ErConfig."""
    return score_matrix(probabilities(logits, spec), u, base_spec(spec))


def batch_label_scores(logits, labels, u, spec) -> np.ndarray:
    return true_label_scores(probabilities(logits, spec), labels, u, base_spec(spec))
