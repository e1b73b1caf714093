"""Entropy-reweighted split conformal classification.

Typical use::

    from erconf import Examples, RandomSource, run_algorithm1
    sweep, sets = run_algorithm1(labeled, unlabeled_logits, alpha=0.1, rng=RandomSource(0))
"""
from .conformal import (
    CalibrationError,
    CalibrationResult,
    ShapeError,
    calibrate,
    calibrate_examples,
    coverage_check,
    predict_set,
    predict_sets,
    prediction_masks,
)
from .core import (
    Examples,
    InvalidInputError,
    LabeledExample,
    PredictionSet,
    RandomSource,
    SplitError,
    ThreeWaySplit,
    rank_of_label,
    softmax,
    three_way_split,
)
from .data import (
    LogitTable,
    ParseError,
    SynthSpec,
    TrainingError,
    generate_synthetic,
    load_logits,
    load_report,
    save_logits,
    save_report,
    train_softmax_classifier,
)
from .kernels import available_backends, backend_name, set_backend
from .metrics import (
    EvalRow,
    ScenarioCounts,
    TrialConfig,
    average_size,
    empirical_coverage,
    label_conditional_coverage,
    run_trials,
    scenario_breakdown,
    summarize,
)
from .reweight import ErConfig, entropy, entropy_from_logits, er_conformity_score, er_probability, reweight_logits
from .scores import (
    ScoreSpec,
    aps_score,
    rank_score,
    raps_score,
    saps_score,
    score_all_labels,
    thr_score,
)
from .temperature import (
    ConfigurationError,
    LabeledFeatures,
    SweepResult,
    TemperatureGrid,
    finalize,
    run_algorithm1,
    sweep_temperatures,
)

__version__ = "0.1.0"
