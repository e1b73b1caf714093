"""Temperature selection for entropy-reweighted conformal sets.

Pipeline: split the labeled data, (optionally) fit a classifier on the first
part, score the second part under every grid temperature, pick the
temperature whose sets on the third part are smallest on average, then
recalibrate on parts two and three together and build sets for new points.
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np

from .conformal import CalibrationResult, calibrate_examples, predict_sets, prediction_masks
from .core import Examples, InvalidInputError, PredictionSet, RandomSource, SplitError, as_logits, three_way_split
from .reweight import DEFAULT_ENTROPY_FLOOR, ErConfig
from .scores import ScoreSpec


class ConfigurationError(ValueError):
    pass


@dataclass(frozen=True)
class TemperatureGrid:
    values: tuple[float, ...]

    def __post_init__(self):
        vals = tuple(float(v) for v in self.values)
        if not vals:
            raise ConfigurationError("temperature grid is empty")
        if any(not (v > 0 and math.isfinite(v)) for v in vals):
            raise ConfigurationError(f"temperatures must be positive and finite: {vals}")
        if any(b <= a for a, b in zip(vals, vals[1:])):
            raise ConfigurationError("temperature grid must be strictly increasing")
        object.__setattr__(self, "values", vals)

    def __len__(self) -> int:
        return len(self.values)

    def __iter__(self):
        return iter(self.values)

    @classmethod
    def log_spaced(cls, t_min: float = 0.05, t_max: float = 20.0, count: int = 41) -> "TemperatureGrid":
        """Log-spaced grid; when 1.0 lies inside [t_min, t_max] the nearest point is snapped to it."""
        if count < 1 or not 0 < t_min <= t_max:
            raise ConfigurationError(f"bad grid bounds t_min={t_min}, t_max={t_max}, count={count}")
        if count == 1:
            return cls((float(t_min),))
        if t_min == t_max:
            raise ConfigurationError("t_min == t_max needs count == 1")
        vals = np.exp(np.linspace(math.log(t_min), math.log(t_max), count))
        if t_min <= 1.0 <= t_max:
            vals[int(np.argmin(np.abs(np.log(vals))))] = 1.0
        return cls(tuple(vals))


DEFAULT_GRID = TemperatureGrid.log_spaced()


@dataclass(frozen=True)
class SweepPoint:
    temperature: float
    avg_size: float
    coverage_d3: float
    threshold: float
    total_size: int


@dataclass(frozen=True)
class SweepResult:
    per_t: tuple[SweepPoint, ...]
    t_star: float
    final: CalibrationResult | None = None

    def point(self, t: float) -> SweepPoint:
        for pt in self.per_t:
            if pt.temperature == t:
                return pt
        raise KeyError(t)


def _evaluate_temperature(d2: Examples, d3: Examples, alpha: float, cfg: ErConfig) -> SweepPoint:
    cal = calibrate_examples(d2, alpha, cfg)
    masks = prediction_masks(d3.logits, d3.u, cal)
    sizes = masks.sum(axis=1)
    covered = masks[np.arange(len(d3)), d3.labels]
    return SweepPoint(cfg.temperature, float(sizes.mean()), float(covered.mean()), cal.threshold, int(sizes.sum()))


def _select(points: Sequence[SweepPoint]) -> float:
    # smallest total size; ties go to the temperature nearest 1.0, then the smaller one
    best = min(points, key=lambda p: (p.total_size, abs(p.temperature - 1.0), p.temperature))
    return best.temperature


def sweep_temperatures(
    d2: Examples,
    d3: Examples,
    alpha: float,
    grid: TemperatureGrid = DEFAULT_GRID,
    base: ScoreSpec | None = None,
    entropy_floor: float = DEFAULT_ENTROPY_FLOOR,
    jobs: int = 1,
) -> SweepResult:
    """Score D2 and size D3 sets at every grid temperature; pick the smallest average size.

    The randomizers stored on ``d2``/``d3`` are reused for every temperature.
    """
    if not isinstance(grid, TemperatureGrid):
        grid = TemperatureGrid(tuple(grid))
    if len(d2) == 0 or len(d3) == 0:
        raise InvalidInputError("sweep needs non-empty D2 and D3")
    if d2.n_classes != d3.n_classes:
        raise InvalidInputError("D2 and D3 disagree on the number of classes")
    if np.any(d2.labels < 0) or np.any(d3.labels < 0):
        raise InvalidInputError("D2 and D3 must be labeled")
    base = base or ScoreSpec()
    cfgs = [ErConfig(t, entropy_floor, base) for t in grid]
    if jobs > 1 and len(cfgs) > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            points = list(pool.map(lambda c: _evaluate_temperature(d2, d3, alpha, c), cfgs))
    else:
        points = [_evaluate_temperature(d2, d3, alpha, c) for c in cfgs]
    return SweepResult(tuple(points), _select(points))


def finalize(
    d2_union_d3: Examples,
    t_star: float,
    alpha: float,
    base: ScoreSpec | None = None,
    entropy_floor: float = DEFAULT_ENTROPY_FLOOR,
) -> CalibrationResult:
    """Recalibrate at the chosen temperature on the pooled D2 and D3 examples."""
    cfg = ErConfig(t_star, entropy_floor, base or ScoreSpec())
    return calibrate_examples(d2_union_d3, alpha, cfg)


@dataclass(frozen=True)
class LabeledFeatures:
    """Raw feature rows for the train-then-calibrate mode of :func:`run_algorithm1`."""

    features: np.ndarray
    labels: np.ndarray

    def __len__(self) -> int:
        return len(self.labels)


def _two_way(n: int, f2: float, f3: float, rng: RandomSource) -> tuple[np.ndarray, np.ndarray]:
    if f2 <= 0 or f3 <= 0:
        raise SplitError("calibration and validation fractions must both be positive")
    n2 = int(math.floor(n * f2 / (f2 + f3) + 1e-9))
    if n2 < 1 or n - n2 < 1:
        raise SplitError(f"n={n} too small for a two-part split")
    perm = rng.generator().permutation(n)
    return np.sort(perm[:n2]), np.sort(perm[n2:])


def run_algorithm1(
    labeled: Examples | LabeledFeatures,
    unlabeled,
    alpha: float,
    grid: TemperatureGrid = DEFAULT_GRID,
    fractions: Sequence[float] = (0.5, 0.25, 0.25),
    rng: RandomSource | None = None,
    base: ScoreSpec | None = None,
    entropy_floor: float = DEFAULT_ENTROPY_FLOOR,
    unlabeled_u=None,
    trainer_kwargs: dict | None = None,
    jobs: int = 1,
) -> tuple[SweepResult, list[PredictionSet]]:
    """Entropy-reweighted conformal sets with a validated temperature.

    With ``labeled`` given as :class:`Examples` the logits are taken as
    precomputed: no model is trained and the labeled rows are split between
    calibration (D2) and temperature validation (D3) in the ratio
    ``fractions[1]:fractions[2]``. With :class:`LabeledFeatures` the rows are
    split three ways and a softmax classifier is fit on D1; ``unlabeled``
    must then be a feature matrix.

    Returns the sweep (with ``final`` filled in) and one set per unlabeled row.
    """
    from .data import train_softmax_classifier

    rng = rng or RandomSource(0)
    base = base or ScoreSpec()
    f = tuple(float(x) for x in fractions)

    if isinstance(labeled, LabeledFeatures):
        split = three_way_split(len(labeled), f, rng.child("split"))
        x = np.asarray(labeled.features, dtype=np.float64)
        y = np.asarray(labeled.labels, dtype=np.int64)
        k = int(y.max()) + 1
        model = train_softmax_classifier(x[split.i1], y[split.i1], n_classes=k, **(trainer_kwargs or {}))
        u = rng.child("u").generator().random(len(y))
        d2 = Examples(model.logits(x[split.i2]), y[split.i2], u[split.i2])
        d3 = Examples(model.logits(x[split.i3]), y[split.i3], u[split.i3])
        unl = np.asarray(unlabeled, dtype=np.float64)
        unl_logits = model.logits(unl) if len(unl) else np.empty((0, k))
    else:
        i2, i3 = _two_way(len(labeled), f[1], f[2], rng.child("split"))
        d2, d3 = labeled.subset(i2), labeled.subset(i3)
        k = labeled.n_classes
        unl_logits = np.asarray(unlabeled, dtype=np.float64).reshape(-1, k)

    sweep = sweep_temperatures(d2, d3, alpha, grid, base, entropy_floor, jobs)
    final = finalize(d2.concat(d3), sweep.t_star, alpha, base, entropy_floor)
    sweep = replace(sweep, final=final)

    if len(unl_logits) == 0:
        return sweep, []
    unl_logits = as_logits(unl_logits, ndim=2)
    if unlabeled_u is None:
        unlabeled_u = rng.child("unlabeled-u").generator().random(len(unl_logits))
    return sweep, predict_sets(unl_logits, unlabeled_u, final)
