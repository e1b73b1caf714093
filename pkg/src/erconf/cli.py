"""Command-line entry point: ``erconf {synth,evaluate,sweep,predict}``.

Exit codes: 0 success, 1 runtime failure (I/O, parse, shape), 2 invalid flags.
"""
from __future__ import annotations

import argparse
import logging
import math
import os
import sys
from pathlib import Path

from .conformal import ShapeError, calibrate_examples, predict_sets
from .core import Examples, InvalidInputError, RandomSource, SplitError, three_way_split
from .data import (
    LogitTable,
    ParseError,
    SynthSpec,
    generate_synthetic,
    load_logits,
    save_logits,
    save_curve,
    save_prediction_sets,
    save_report,
    save_sweep,
)
from .metrics import SCORE_NAMES, TrialConfig, format_table, run_trials, summarize
from .reweight import DEFAULT_ENTROPY_FLOOR
from .scores import ScoreSpec
from .temperature import ConfigurationError, TemperatureGrid, finalize, sweep_temperatures

log = logging.getLogger("erconf")


class ValidationError(Exception):
    """Bad flag combination discovered after parsing; exits with status 2."""


# -- argument types ----------------------------------------------------------


def _positive_float(s: str) -> float:
    try:
        v = float(s)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a number: {s!r}") from None
    if not (v > 0 and math.isfinite(v)):
        raise argparse.ArgumentTypeError(f"must be > 0, got {s}")
    return v


def _positive_int(s: str) -> int:
    try:
        v = int(s)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {s!r}") from None
    if v < 1:
        raise argparse.ArgumentTypeError(f"must be >= 1, got {s}")
    return v


def _alpha(s: str) -> float:
    try:
        v = float(s)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a number: {s!r}") from None
    if not 0 < v < 1:
        raise argparse.ArgumentTypeError(f"alpha must lie in (0, 1), got {s}")
    return v


def _alpha_list(s: str) -> tuple[float, ...]:
    parts = [p for p in s.split(",") if p.strip()]
    if not parts:
        raise argparse.ArgumentTypeError("empty alpha list")
    return tuple(_alpha(p) for p in parts)


def _alpha_range(s: str) -> tuple[float, ...]:
    """``start:stop:step`` with ``stop`` included."""
    try:
        start, stop, step = (float(p) for p in s.split(":"))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected start:stop:step, got {s!r}") from None
    if step <= 0 or stop < start:
        raise argparse.ArgumentTypeError(f"need step > 0 and stop >= start, got {s!r}")
    count = int(math.floor((stop - start) / step + 1e-9)) + 1
    return tuple(_alpha(repr(round(start + i * step, 10))) for i in range(count))


def _score_list(s: str) -> tuple[str, ...]:
    names = tuple(p.strip().lower() for p in s.split(",") if p.strip())
    bad = [n for n in names if n not in SCORE_NAMES]
    if bad or not names:
        raise argparse.ArgumentTypeError(f"unknown score(s) {bad or s!r}; choose from {','.join(SCORE_NAMES)}")
    return names


def _fractions(s: str) -> tuple[float, float, float]:
    try:
        f = tuple(float(p) for p in s.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected three comma-separated numbers, got {s!r}") from None
    if len(f) != 3 or any(x < 0 for x in f) or abs(sum(f) - 1) > 1e-9:
        raise argparse.ArgumentTypeError(f"need three non-negative fractions summing to 1, got {s!r}")
    return f


def _grid_list(s: str) -> TemperatureGrid:
    try:
        return TemperatureGrid(tuple(float(p) for p in s.split(",") if p.strip()))
    except (ValueError, ConfigurationError) as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def _fraction(s: str) -> float:
    v = _positive_float(s)
    if v >= 1:
        raise argparse.ArgumentTypeError(f"must lie in (0, 1), got {s}")
    return v


# -- parser ------------------------------------------------------------------


def _add_grid_flags(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("temperature grid")
    g.add_argument("--t-grid", type=_grid_list, help="explicit comma-separated temperatures (overrides the log grid)")
    g.add_argument("--t-min", type=_positive_float, default=0.05)
    g.add_argument("--t-max", type=_positive_float, default=20.0)
    g.add_argument("--t-count", type=_positive_int, default=41)
    g.add_argument("--entropy-floor", type=_positive_float, default=DEFAULT_ENTROPY_FLOOR)


def _add_score_flags(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("score hyperparameters")
    g.add_argument("--raps-lambda", type=float, default=None)
    g.add_argument("--raps-kreg", type=int, default=1)
    g.add_argument("--saps-lambda", type=_positive_float, default=None)
    g.add_argument("--no-randomize", action="store_true", help="set every randomizer to 1")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="erconf", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="write synthetic train/cal/test logit files")
    p.add_argument("--k", type=_positive_int, default=10, help="number of classes")
    p.add_argument("--n", type=_positive_int, default=5000)
    p.add_argument("--dim", type=_positive_int, default=None, help="feature dimension (default: k)")
    p.add_argument("--separation", type=_positive_float, default=3.5)
    p.add_argument("--overconfidence", type=_positive_float, default=1.0)
    p.add_argument("--fractions", type=_fractions, default=(0.5, 0.25, 0.25))
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out-dir", type=Path, default=Path("."))

    p = sub.add_parser("evaluate", help="repeated random-split coverage/size evaluation")
    p.add_argument("--logits", type=Path, action="append", required=True, help="labeled logit file (repeatable; pooled)")
    p.add_argument("--dataset", default=None, help="name written to the report (default: first file stem)")
    p.add_argument("--scores", type=_score_list, default=("er", "aps", "raps", "saps"))
    a = p.add_mutually_exclusive_group()
    a.add_argument("--alphas", type=_alpha_list)
    a.add_argument("--alpha-range", type=_alpha_range, help="start:stop:step, stop inclusive")
    p.add_argument("--trials", type=_positive_int, default=10)
    p.add_argument("--test-fraction", type=_fraction, default=0.5)
    p.add_argument("--d3-fraction", type=_fraction, default=0.5)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--sweep-dir", type=Path, default=None, help="where ER sweep tables go (default: <out>_sweeps/)")
    p.add_argument("--jobs", type=_positive_int, default=os.cpu_count() or 1)
    _add_grid_flags(p)
    _add_score_flags(p)

    p = sub.add_parser("sweep", help="temperature sweep on labeled D2/D3 files")
    p.add_argument("--d2", type=Path, required=True)
    p.add_argument("--d3", type=Path, required=True)
    p.add_argument("--alpha", type=_alpha, default=0.1)
    p.add_argument("--base", choices=["aps", "raps", "saps", "thr", "rank"], default="aps")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--jobs", type=_positive_int, default=os.cpu_count() or 1)
    _add_grid_flags(p)
    _add_score_flags(p)

    p = sub.add_parser("predict", help="prediction sets for unlabeled logits")
    p.add_argument("--d2", type=Path, required=True, help="labeled calibration logits")
    p.add_argument("--d3", type=Path, required=True, help="labeled temperature-validation logits")
    p.add_argument("--unlabeled", type=Path, required=True)
    p.add_argument("--alpha", type=_alpha, default=0.1)
    p.add_argument("--score", choices=list(SCORE_NAMES), default="er")
    p.add_argument("--base", choices=["aps", "raps", "saps", "thr", "rank"], default="aps")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--jobs", type=_positive_int, default=os.cpu_count() or 1)
    _add_grid_flags(p)
    _add_score_flags(p)
    return parser


# -- helpers -----------------------------------------------------------------


def _grid(args) -> TemperatureGrid:
    if args.t_grid is not None:
        return args.t_grid
    if args.t_min > args.t_max:
        raise ValidationError(f"--t-min ({args.t_min}) exceeds --t-max ({args.t_max})")
    try:
        return TemperatureGrid.log_spaced(args.t_min, args.t_max, args.t_count)
    except ConfigurationError as exc:
        raise ValidationError(f"--t-count: {exc}") from None


def _spec(name: str, args) -> ScoreSpec:
    try:
        if name == "raps":
            return ScoreSpec("raps", args.raps_lambda, args.raps_kreg, not args.no_randomize)
        if name == "saps":
            return ScoreSpec("saps", args.saps_lambda, randomized=not args.no_randomize)
        return ScoreSpec(name, randomized=not args.no_randomize)
    except InvalidInputError as exc:
        raise ValidationError(f"--{name}-lambda/--raps-kreg: {exc}") from None


def _echo(args) -> None:
    items = []
    for key, val in sorted(vars(args).items()):
        if isinstance(val, TemperatureGrid):
            val = ",".join(f"{t:g}" for t in val)
        elif isinstance(val, (list, tuple)):
            val = ",".join(str(v) for v in val)
        items.append(f"{key}={val}")
    print("config " + " ".join(items), file=sys.stderr)


def _labeled(path: Path, rng: RandomSource) -> Examples:
    table = load_logits(path)
    if not table.is_labeled:
        raise InvalidInputError(f"{path}: every row needs a label")
    if len(table) == 0:
        raise InvalidInputError(f"{path}: no rows")
    return table.with_uniforms(rng)


# -- commands ----------------------------------------------------------------


def cmd_synth(args) -> int:
    try:
        spec = SynthSpec(args.k, args.dim, args.n, args.separation, args.overconfidence, args.seed)
    except InvalidInputError as exc:
        raise ValidationError(f"--k/--dim: {exc}") from None
    data = generate_synthetic(spec)
    split = three_way_split(args.n, args.fractions, RandomSource(args.seed).child("synth-split"))
    args.out_dir.mkdir(parents=True, exist_ok=True)
    post_rows = []
    for name, idx in (("train", split.i1), ("cal", split.i2), ("test", split.i3)):
        save_logits(data.table.subset(idx), args.out_dir / f"{name}.csv")
        post_rows.extend((name, int(i), data.posteriors[i]) for i in idx)
    with (args.out_dir / "posteriors.csv").open("w", encoding="utf-8", newline="") as fh:
        fh.write("split,row," + ",".join(f"p_{j}" for j in range(args.k)) + "\n")
        for name, i, p in post_rows:
            fh.write(f"{name},{i}," + ",".join(repr(float(v)) for v in p) + "\n")
    print(f"wrote {split.sizes()} rows (train, cal, test) with K={args.k} to {args.out_dir}")
    return 0


def cmd_evaluate(args) -> int:
    alphas = args.alphas or args.alpha_range or (0.01, 0.05, 0.10)
    grid = _grid(args)
    for name in ("raps", "saps"):
        _spec(name, args)
    table = LogitTable.concat([load_logits(p) for p in args.logits])
    if not table.is_labeled:
        raise InvalidInputError("evaluation files must be fully labeled")
    dataset = args.dataset or args.logits[0].stem
    cfg = TrialConfig(
        scores=args.scores,
        alphas=alphas,
        trials=args.trials,
        dataset=dataset,
        test_fraction=args.test_fraction,
        d3_fraction=args.d3_fraction,
        grid=grid,
        raps_lambda=args.raps_lambda,
        raps_kreg=args.raps_kreg,
        saps_lambda=args.saps_lambda,
        randomized=not args.no_randomize,
        entropy_floor=args.entropy_floor,
    )
    rows = run_trials(cfg, table, RandomSource(args.seed), jobs=args.jobs)
    args.out.parent.mkdir(parents=True, exist_ok=True)
    save_report(rows, args.out)
    if "er" in args.scores:
        sweep_dir = args.sweep_dir or args.out.with_name(args.out.stem + "_sweeps")
        sweep_dir.mkdir(parents=True, exist_ok=True)
        for r in rows:
            if r.sweep is not None:
                save_sweep(r.sweep, sweep_dir / f"sweep_{dataset}_alpha{r.alpha:.4f}_trial{r.trial}.csv")
    summary = summarize(rows)
    curve = args.out.with_name(args.out.stem + "_curve.csv")
    save_curve(summary, curve)
    print(format_table(summary))
    print(f"wrote {len(rows)} rows to {args.out} and per-alpha means to {curve}")
    return 0


def cmd_sweep(args) -> int:
    grid = _grid(args)
    base = _spec(args.base, args)
    rng = RandomSource(args.seed)
    d2 = _labeled(args.d2, rng.child("u", "d2"))
    d3 = _labeled(args.d3, rng.child("u", "d3"))
    if d2.n_classes != d3.n_classes:
        raise ShapeError(f"D2 has K={d2.n_classes}, D3 has K={d3.n_classes}")
    sweep = sweep_temperatures(d2, d3, args.alpha, grid, base, args.entropy_floor, args.jobs)
    args.out.parent.mkdir(parents=True, exist_ok=True)
    save_sweep(sweep, args.out)
    best = sweep.point(sweep.t_star)
    print(f"T*={sweep.t_star:g} avg_size={best.avg_size:.6f} coverage_d3={best.coverage_d3:.6f}")
    return 0


def cmd_predict(args) -> int:
    rng = RandomSource(args.seed)
    d2 = _labeled(args.d2, rng.child("u", "d2"))
    d3 = _labeled(args.d3, rng.child("u", "d3"))
    if d2.n_classes != d3.n_classes:
        raise ShapeError(f"D2 has K={d2.n_classes}, D3 has K={d3.n_classes}")
    unl = load_logits(args.unlabeled)
    if len(unl) and unl.n_classes != d2.n_classes:
        raise ShapeError(f"unlabeled logits have K={unl.n_classes}, calibration data K={d2.n_classes}")
    pool = d2.concat(d3)
    if args.score == "er":
        grid = _grid(args)
        base = _spec(args.base, args)
        sweep = sweep_temperatures(d2, d3, args.alpha, grid, base, args.entropy_floor, args.jobs)
        cal = finalize(pool, sweep.t_star, args.alpha, base, args.entropy_floor)
        print(f"T*={sweep.t_star:g} threshold={cal.threshold!r}")
    else:
        cal = calibrate_examples(pool, args.alpha, _spec(args.score, args))
        print(f"threshold={cal.threshold!r}")
    u = rng.child("u", "unlabeled").generator().random(len(unl))
    sets = predict_sets(unl.logits, u, cal) if len(unl) else []
    args.out.parent.mkdir(parents=True, exist_ok=True)
    save_prediction_sets(sets, args.out)
    print(f"wrote {len(sets)} prediction sets to {args.out}")
    return 0


COMMANDS = {"synth": cmd_synth, "evaluate": cmd_evaluate, "sweep": cmd_sweep, "predict": cmd_predict}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    _echo(args)
    try:
        return COMMANDS[args.command](args)
    except (ValidationError, ConfigurationError) as exc:
        print(f"erconf {args.command}: error: {exc}", file=sys.stderr)
        return 2
    except (ParseError, ShapeError, InvalidInputError, SplitError, OSError, ValueError) as exc:
        print(f"erconf {args.command}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
