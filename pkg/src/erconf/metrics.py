"""Coverage/size metrics and the repeated-random-split evaluation protocol."""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .conformal import calibrate_examples, prediction_masks
from .core import Examples, InvalidInputError, PredictionSet, RandomSource
from .reweight import DEFAULT_ENTROPY_FLOOR, entropy_from_logits
from .scores import ScoreSpec
from .temperature import DEFAULT_GRID, SweepResult, TemperatureGrid, finalize, sweep_temperatures

SCORE_NAMES = ("er", "aps", "raps", "saps", "thr", "rank")


def _as_masks(sets, n_classes: int | None = None) -> np.ndarray:
    if isinstance(sets, np.ndarray) and sets.dtype == bool:
        return sets
    sets = list(sets)
    if n_classes is None:
        n_classes = 1 + max((max(s.members) for s in sets if len(s)), default=0)
    mask = np.zeros((len(sets), n_classes), dtype=bool)
    for i, s in enumerate(sets):
        for c in s.members:
            mask[i, c] = True
    return mask


def empirical_coverage(sets, labels) -> float:
    """Share of rows whose label is in its set. ``sets`` is a list or an (n, K) bool mask."""
    labels = np.asarray(labels, dtype=np.int64)
    if isinstance(sets, np.ndarray):
        if sets.shape[0] != labels.shape[0]:
            raise InvalidInputError("sets and labels differ in length")
        if labels.size == 0:
            raise InvalidInputError("no rows to evaluate")
        return float(sets[np.arange(labels.size), labels].mean())
    sets = list(sets)
    if len(sets) != labels.size:
        raise InvalidInputError("sets and labels differ in length")
    if not sets:
        raise InvalidInputError("no rows to evaluate")
    return sum(int(y) in s for s, y in zip(sets, labels)) / len(sets)


def average_size(sets) -> float:
    if isinstance(sets, np.ndarray):
        if sets.shape[0] == 0:
            raise InvalidInputError("no rows to evaluate")
        return float(sets.sum(axis=1).mean())
    sets = list(sets)
    if not sets:
        raise InvalidInputError("no rows to evaluate")
    return sum(len(s) for s in sets) / len(sets)


def label_conditional_coverage(sets, labels, n_classes: int | None = None) -> np.ndarray:
    """Per-class coverage; NaN marks classes that never occur in ``labels``."""
    labels = np.asarray(labels, dtype=np.int64)
    if n_classes is None:
        n_classes = sets.shape[1] if isinstance(sets, np.ndarray) else int(labels.max()) + 1
    mask = _as_masks(sets, n_classes)
    hit = mask[np.arange(labels.size), labels]
    counts = np.bincount(labels, minlength=n_classes).astype(np.float64)
    covered = np.bincount(labels, weights=hit, minlength=n_classes)
    with np.errstate(invalid="ignore", divide="ignore"):
        return np.where(counts > 0, covered / counts, np.nan)


@dataclass(frozen=True)
class ScenarioCounts:
    correct_low: int
    correct_high: int
    incorrect_low: int
    incorrect_high: int
    threshold: float

    @property
    def total(self) -> int:
        return self.correct_low + self.correct_high + self.incorrect_low + self.incorrect_high

    def as_dict(self) -> dict[str, int]:
        return {
            "correct_low_entropy": self.correct_low,
            "correct_high_entropy": self.correct_high,
            "incorrect_low_entropy": self.incorrect_low,
            "incorrect_high_entropy": self.incorrect_high,
        }


def scenario_breakdown(examples: Examples, entropy_threshold: float | None = None) -> ScenarioCounts:
    """Cross-tabulate argmax correctness against low/high predictive entropy.

    Entropy at or below the threshold counts as low. The default threshold is
    the median entropy of ``examples``.
    """
    if len(examples) == 0:
        raise InvalidInputError("no examples")
    h = entropy_from_logits(examples.logits)
    if entropy_threshold is None:
        entropy_threshold = float(np.median(h))
    elif not 0 < entropy_threshold < math.log(examples.n_classes):
        raise InvalidInputError(f"entropy threshold must lie in (0, log K), got {entropy_threshold}")
    correct = examples.logits.argmax(axis=1) == examples.labels
    low = h <= entropy_threshold
    return ScenarioCounts(
        int(np.sum(correct & low)),
        int(np.sum(correct & ~low)),
        int(np.sum(~correct & low)),
        int(np.sum(~correct & ~low)),
        float(entropy_threshold),
    )


@dataclass(frozen=True)
class EvalRow:
    dataset: str
    score: str
    alpha: float
    trial: int
    coverage: float
    avg_size: float
    label_coverage: np.ndarray | None = field(default=None, compare=False, repr=False)
    scenarios: ScenarioCounts | None = field(default=None, compare=False, repr=False)
    sweep: SweepResult | None = field(default=None, compare=False, repr=False)


@dataclass(frozen=True)
class TrialConfig:
    """Everything :func:`run_trials` needs besides the data and the seed.

    Each trial re-splits the pooled labeled rows into a calibration part and a
    ``test_fraction`` test part. The ER score further splits the calibration
    part into D2 and D3 (``d3_fraction`` of it) to choose the temperature, then
    recalibrates on the whole calibration part, so every score calibrates on
    the same rows.
    """

    scores: tuple[str, ...] = ("er", "aps", "raps", "saps")
    alphas: tuple[float, ...] = (0.01, 0.05, 0.10)
    trials: int = 10
    dataset: str = "data"
    test_fraction: float = 0.5
    d3_fraction: float = 0.5
    grid: TemperatureGrid = DEFAULT_GRID
    er_base: ScoreSpec = field(default_factory=ScoreSpec)
    raps_lambda: float | None = None
    raps_kreg: int = 1
    saps_lambda: float | None = None
    randomized: bool = True
    entropy_floor: float = DEFAULT_ENTROPY_FLOOR

    def __post_init__(self):
        bad = [s for s in self.scores if s not in SCORE_NAMES]
        if bad:
            raise InvalidInputError(f"unknown score(s) {bad}; choose from {list(SCORE_NAMES)}")
        if not self.scores:
            raise InvalidInputError("no scores requested")
        if not self.alphas or any(not 0 < a < 1 for a in self.alphas):
            raise InvalidInputError(f"alphas must lie in (0, 1): {self.alphas}")
        if self.trials < 1:
            raise InvalidInputError("trials must be >= 1")
        if not 0 < self.test_fraction < 1 or not 0 < self.d3_fraction < 1:
            raise InvalidInputError("test_fraction and d3_fraction must lie in (0, 1)")

    def spec_for(self, name: str) -> ScoreSpec:
        if name == "raps":
            return ScoreSpec("raps", self.raps_lambda, self.raps_kreg, self.randomized)
        if name == "saps":
            return ScoreSpec("saps", self.saps_lambda, randomized=self.randomized)
        return ScoreSpec(name, randomized=self.randomized)


def _split(n: int, frac: float, gen: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    n_b = int(math.floor(n * frac + 1e-9))
    if n_b < 1 or n - n_b < 1:
        raise InvalidInputError(f"cannot split {n} rows with fraction {frac}")
    perm = gen.permutation(n)
    return np.sort(perm[n_b:]), np.sort(perm[:n_b])


def _run_one_trial(pool_logits, pool_labels, cfg: TrialConfig, rng: RandomSource, trial: int) -> list[EvalRow]:
    trng = rng.child("trial", trial)
    n = pool_labels.shape[0]
    u = trng.child("u").generator().random(n)
    data = Examples(pool_logits, pool_labels, u)
    cal_idx, test_idx = _split(n, cfg.test_fraction, trng.child("split").generator())
    cal, test = data.subset(cal_idx), data.subset(test_idx)
    scen = scenario_breakdown(test)
    k = data.n_classes
    rows = []
    for name in cfg.scores:
        for alpha in cfg.alphas:
            sweep = None
            if name == "er":
                d2_rel, d3_rel = _split(len(cal), cfg.d3_fraction, trng.child("er-split").generator())
                d2, d3 = cal.subset(d2_rel), cal.subset(d3_rel)
                sweep = sweep_temperatures(d2, d3, alpha, cfg.grid, cfg.er_base, cfg.entropy_floor)
                result = finalize(d2.concat(d3), sweep.t_star, alpha, cfg.er_base, cfg.entropy_floor)
                sweep = SweepResult(sweep.per_t, sweep.t_star, result)
            else:
                result = calibrate_examples(cal, alpha, cfg.spec_for(name))
            masks = prediction_masks(test.logits, test.u, result)
            rows.append(
                EvalRow(
                    cfg.dataset,
                    name,
                    float(alpha),
                    trial,
                    empirical_coverage(masks, test.labels),
                    average_size(masks),
                    label_conditional_coverage(masks, test.labels, k),
                    scen,
                    sweep,
                )
            )
    return rows


def run_trials(config: TrialConfig, data, rng: RandomSource, jobs: int = 1) -> list[EvalRow]:
    """One row per (score, alpha, trial); trial ``t`` draws from stream ``(seed, 'trial', t)``.

    ``data`` is anything with ``logits`` and ``labels`` (an Examples batch or a
    LogitTable); any stored randomizers are ignored and redrawn per trial.
    """
    logits = np.asarray(data.logits, dtype=np.float64)
    labels = np.asarray(data.labels, dtype=np.int64)
    if np.any(labels < 0):
        raise InvalidInputError("evaluation data must be fully labeled")
    work = range(config.trials)
    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            chunks = list(pool.map(lambda t: _run_one_trial(logits, labels, config, rng, t), work))
    else:
        chunks = [_run_one_trial(logits, labels, config, rng, t) for t in work]
    rows = [r for chunk in chunks for r in chunk]
    order = {name: i for i, name in enumerate(config.scores)}
    rows.sort(key=lambda r: (order[r.score], r.alpha, r.trial))
    return rows


@dataclass(frozen=True)
class SummaryRow:
    dataset: str
    score: str
    alpha: float
    coverage_mean: float
    coverage_std: float
    size_mean: float
    size_std: float
    trials: int


def summarize(rows) -> list[SummaryRow]:
    """Trial means and standard deviations per (dataset, score, alpha)."""
    groups: dict[tuple, list[EvalRow]] = {}
    for r in rows:
        groups.setdefault((r.dataset, r.score, r.alpha), []).append(r)
    out = []
    for (ds, sc, a), rs in groups.items():
        cov = np.array([r.coverage for r in rs])
        size = np.array([r.avg_size for r in rs])
        out.append(SummaryRow(ds, sc, a, float(cov.mean()), float(cov.std()), float(size.mean()), float(size.std()), len(rs)))
    return out


def format_table(summary) -> str:
    """Dataset x score rows, one (coverage, size) column pair per alpha."""
    summary = list(summary)
    alphas = sorted({s.alpha for s in summary})
    cells = {(s.dataset, s.score, s.alpha): s for s in summary}
    keys = list(dict.fromkeys((s.dataset, s.score) for s in summary))
    head = f"{'dataset':<12} {'score':<6}" + "".join(f" | a={a:<5.3f} cov   size " for a in alphas)
    lines = [head, "-" * len(head)]
    for ds, sc in keys:
        line = f"{ds:<12} {sc:<6}"
        for a in alphas:
            s = cells.get((ds, sc, a))
            line += " |     ---     ---  " if s is None else f" | {s.coverage_mean:10.3f} {s.size_mean:6.3f}"
        lines.append(line)
    return "\n".join(lines)


def sets_to_masks(sets: list[PredictionSet], n_classes: int) -> np.ndarray:
    return _as_masks(sets, n_classes)
