"""Split conformal calibration and set construction."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import Examples, InvalidInputError, PredictionSet, as_logits
from .reweight import ErConfig, batch_label_scores, batch_scores
from .scores import ScoreSpec


class CalibrationError(ValueError):
    pass


class ShapeError(ValueError):
    pass


def conformal_rank(n: int, alpha: float) -> int:
    """1-based order statistic ``ceil((1 - alpha) (n + 1))`` used as the threshold.

    A 1e-9 slack absorbs representation error, e.g. (1 - 0.05) * 20 = 18.999...
    """
    return math.ceil((1.0 - alpha) * (n + 1) - 1e-9)


@dataclass(frozen=True)
class CalibrationResult:
    threshold: float
    alpha: float
    n_cal: int
    spec: ScoreSpec | ErConfig | None = None
    n_classes: int | None = None

    @property
    def temperature(self) -> float | None:
        return self.spec.temperature if isinstance(self.spec, ErConfig) else None


def calibrate(scores, alpha: float, spec=None, n_classes: int | None = None) -> CalibrationResult:
    """Threshold = k-th smallest calibration score, or +inf when k exceeds n."""
    scores = np.asarray(scores, dtype=np.float64).reshape(-1)
    if scores.size == 0:
        raise CalibrationError("cannot calibrate on an empty score list")
    if not 0.0 < alpha < 1.0:
        raise CalibrationError(f"alpha must lie in (0, 1), got {alpha}")
    n = scores.size
    k = conformal_rank(n, alpha)
    if k > n:
        q = math.inf
    else:
        q = float(np.partition(scores, k - 1)[k - 1])
    return CalibrationResult(q, float(alpha), n, spec, n_classes)


def calibrate_examples(cal: Examples, alpha: float, spec) -> CalibrationResult:
    """Score each calibration example at its true label, then calibrate."""
    s = batch_label_scores(cal.logits, cal.labels, cal.u, spec)
    return calibrate(s, alpha, spec, cal.n_classes)


def _spec_of(cal: CalibrationResult):
    if cal.spec is None:
        raise CalibrationError("calibration result carries no score spec")
    return cal.spec


def prediction_masks(logits, u, cal: CalibrationResult) -> np.ndarray:
    """(n, K) membership mask: label y kept iff its score is <= the threshold."""
    z = as_logits(logits, ndim=2)
    if cal.n_classes is not None and z.shape[1] != cal.n_classes:
        raise ShapeError(f"calibrated on K={cal.n_classes}, got logits with K={z.shape[1]}")
    if math.isinf(cal.threshold):
        return np.ones(z.shape, dtype=bool)
    return batch_scores(z, u, _spec_of(cal)) <= cal.threshold


def predict_set(z, u: float, cal: CalibrationResult) -> PredictionSet:
    z = as_logits(z, ndim=1)
    return PredictionSet.from_mask(prediction_masks(z[None, :], np.array([u]), cal)[0])


def predict_sets(logits, u, cal: CalibrationResult) -> list[PredictionSet]:
    return [PredictionSet.from_mask(m) for m in prediction_masks(logits, u, cal)]


def coverage_check(cal: CalibrationResult, test: Examples) -> float:
    """Fraction of ``test`` whose true label lands in its prediction set."""
    if len(test) == 0:
        raise InvalidInputError("coverage needs at least one test example")
    masks = prediction_masks(test.logits, test.u, cal)
    return float(masks[np.arange(len(test)), test.labels].mean())
