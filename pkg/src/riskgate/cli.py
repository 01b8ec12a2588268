"""Command-line interface.

Subcommands mirror the pipeline stages: generate a labeled dataset,
train and calibrate per-contingency models, run budgeted triage with the
exact oracle, evaluate a model on the test split, and reproduce the
shipped experiments.  Exit codes: 0 success, 2 configuration error
(bad flags, malformed files), 3 data error (degenerate inputs).
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .calibration import CalibratedEnsemble, brier_score, fit_platt, reliability_csv
from .errors import ConfigError, DataError
from .experiments import EXPERIMENT_NAMES, RUNNERS, ExperimentConfig
from .grid import assess_security, load_grid, six_bus
from .learner import ensemble_score, ensemble_vote, load_model, save_model, train_adaboost
from .risk_engine import (
    load_contingency_params,
    rank_scenarios,
    residual_risk_estimate,
    risk_optimal_predict,
    triage,
    triage_csv,
    uniform_condition_probabilities,
)
from .scenario_gen import LOAD_BUSES, build_database, load_database, save_database


def _add_generate(sub):
    p = sub.add_parser("generate", help="sample, dispatch and label a dataset")
    p.add_argument("--out", required=True, help="output dataset.csv")
    p.add_argument("--n", type=int, default=5875)
    p.add_argument("--splits", default="3500,875,1500", help="train,calib,test sizes")
    p.add_argument("--seed", type=int, default=101)
    p.add_argument("--contingencies", default="1,2,3,4,5,6,7,8,9,10,11", help="line ids to label")
    p.add_argument("--network", help="network.json (defaults to the packaged six-bus system)")


def _add_train(sub):
    p = sub.add_parser("train", help="train a boosted ensemble for one contingency")
    p.add_argument("--data", required=True)
    p.add_argument("--contingency", type=int, required=True)
    p.add_argument("--rounds", type=int, default=100)
    p.add_argument("--mode", choices=("samme", "samme.r"), default="samme.r")
    p.add_argument("--k-folds", type=int, default=3)
    p.add_argument("--out", required=True, help="output model.json")


def _add_calibrate(sub):
    p = sub.add_parser("calibrate", help="fit sigmoid calibration on the calibration split")
    p.add_argument("--data", required=True)
    p.add_argument("--model", required=True)
    p.add_argument("--out", help="output model.json (defaults to --model, in place)")
    p.add_argument("--reliability", help="optional reliability-diagram CSV (test split)")
    p.add_argument("--bins", type=int, default=10)


def _add_triage(sub):
    p = sub.add_parser("triage", help="rank test scenarios and verify the riskiest with the oracle")
    p.add_argument("--data", required=True)
    p.add_argument("--models", required=True, help="comma-separated model.json paths")
    p.add_argument("--contingencies-file", required=True, help="contingencies.json with p_c and costs")
    p.add_argument("--budget", type=int, required=True)
    p.add_argument("--out", required=True, help="output triage.csv")
    p.add_argument("--network", help="network.json for the oracle (defaults to packaged)")
    p.add_argument("--condition-probs", help="CSV id,probability overriding the uniform default")


def _add_evaluate(sub):
    p = sub.add_parser("evaluate", help="test-split error, Brier and residual-risk metrics")
    p.add_argument("--data", required=True)
    p.add_argument("--model", required=True)
    p.add_argument("--probability", type=float, required=True, help="contingency occurrence probability")
    p.add_argument("--cost-ratio", type=float, required=True)
    p.add_argument("--bins", type=int, default=10)
    p.add_argument("--out", help="optional metrics.json")


def _add_experiment(sub):
    p = sub.add_parser("experiment", help="run a shipped study end to end")
    p.add_argument("name", choices=EXPERIMENT_NAMES)
    p.add_argument("--config", help="ExperimentConfig JSON")
    p.add_argument("--seed", type=int)
    p.add_argument("--out", help="output directory")
    p.add_argument("--budget", type=int, help="unused by sweeping runners; accepted for symmetry")
    p.add_argument("--bins", type=int)
    p.add_argument("--rounds", type=int)
    p.add_argument("--mode", choices=("samme", "samme.r"))


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="riskgate", description=__doc__)
    parser.add_argument("--version", action="version", version=f"riskgate {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    _add_generate(sub)
    _add_train(sub)
    _add_calibrate(sub)
    _add_triage(sub)
    _add_evaluate(sub)
    _add_experiment(sub)
    return parser


def _grid_from_args(args):
    return load_grid(args.network) if getattr(args, "network", None) else six_bus()


def _cmd_generate(args) -> int:
    splits = tuple(int(v) for v in args.splits.split(","))
    if len(splits) != 3:
        raise ConfigError("--splits needs exactly three comma-separated sizes")
    contingencies = [int(v) for v in args.contingencies.split(",") if v]
    db = build_database(_grid_from_args(args), n=args.n, contingencies=contingencies,
                        seed=args.seed, splits=splits)
    save_database(db, args.out)
    print(f"wrote {args.out}: {len(db)} conditions, contingencies {db.contingencies}")
    return 0


def _cmd_train(args) -> int:
    db = load_database(args.data)
    x = db.features_matrix("train")
    y = db.label_vector(args.contingency, "train")
    ens = train_adaboost(x, y, rounds=args.rounds, mode=args.mode, k_folds=args.k_folds)
    save_model(args.out, ens, contingency=args.contingency)
    print(f"wrote {args.out}: {ens.rounds} rounds ({ens.mode})")
    return 0


def _cmd_calibrate(args) -> int:
    db = load_database(args.data)
    ens, contingency, _ = load_model(args.model)
    if contingency is None:
        raise ConfigError("model carries no contingency id; retrain with --contingency")
    scores = ensemble_score(ens, db.features_matrix("calib"))
    params = fit_platt(scores, db.label_vector(contingency, "calib"))
    out = args.out or args.model
    save_model(out, ens, contingency=contingency, calibration=params)
    print(f"wrote {out}: a={params.a:.4f} b={params.b:.4f} ({params.iterations} iterations)")
    if args.reliability:
        test_scores = ensemble_score(ens, db.features_matrix("test"))
        from .calibration import calibrated_probability

        probs = calibrated_probability(params, test_scores)
        _, bins = brier_score(probs, db.label_vector(contingency, "test"), bins=args.bins)
        reliability_csv(bins, args.reliability)
        print(f"wrote {args.reliability}")
    return 0


def _load_condition_probs(path, n):
    probs = np.full(n, np.nan)
    for lineno, line in enumerate(Path(path).read_text().splitlines(), start=1):
        if not line.strip() or line.startswith("id"):
            continue
        parts = line.split(",")
        if len(parts) != 2:
            raise ConfigError(f"{path}:{lineno}: expected 'id,probability'")
        probs[int(parts[0])] = float(parts[1])
    if np.any(np.isnan(probs)):
        raise ConfigError("condition probability file misses some test conditions")
    return probs


def _cmd_triage(args) -> int:
    db = load_database(args.data)
    grid = _grid_from_args(args)
    params = load_contingency_params(args.contingencies_file)
    models = {}
    for path in args.models.split(","):
        ens, contingency, cal = load_model(path)
        if contingency is None:
            raise ConfigError(f"{path}: model carries no contingency id")
        models[contingency] = CalibratedEnsemble(ensemble=ens, contingency=contingency, params=cal)
    missing = sorted(set(params) - set(models))
    if missing:
        raise ConfigError(f"no model supplied for contingencies {missing}")

    test_idx = db.split_indices("test")
    features = db.features_matrix("test")
    n = len(test_idx)
    p_cond = (_load_condition_probs(args.condition_probs, n)
              if args.condition_probs else uniform_condition_probabilities(n))
    ranked = rank_scenarios(features, list(range(n)), p_cond, models, params)

    def oracle(condition, contingency):
        cond = db.conditions[test_idx[condition]]
        loads = np.zeros(grid.n_buses)
        for k, bus in enumerate(LOAD_BUSES):
            loads[grid.bus_position(bus)] = cond.loads[k]
        return assess_security(grid, loads, cond.generation, contingency)

    report = triage(ranked, args.budget, oracle, params)
    triage_csv(report, args.out)
    print(f"wrote {args.out}: assessed {report.n_high}/{len(ranked)} scenarios "
          f"(coverage {report.assessed_fraction:.3f}), total risk {report.total_risk:.6g}")
    return 0


def _cmd_evaluate(args) -> int:
    db = load_database(args.data)
    ens, contingency, cal = load_model(args.model)
    if contingency is None:
        raise ConfigError("model carries no contingency id")
    model = CalibratedEnsemble(ensemble=ens, contingency=contingency, params=cal)
    x = db.features_matrix("test")
    y = db.label_vector(contingency, "test")
    from .risk_engine import ContingencyParams

    params = ContingencyParams.from_cost_ratio(contingency, args.probability, args.cost_ratio)
    probs = np.asarray(model.probability(x))
    labels, _ = risk_optimal_predict(probs, params)
    votes = ensemble_vote(ens, x)
    missed = int(np.sum((y == 0) & (labels == 1)))
    false = int(np.sum((y == 1) & (labels == 0)))
    metrics = {
        "contingency": contingency,
        "n_test": int(len(y)),
        "vote_error": float(np.mean(votes != y)),
        "thresholded_error": float(np.mean(labels != y)),
        "missed_alarms": missed,
        "false_alarms": false,
        "residual_risk": residual_risk_estimate(missed, false, args.cost_ratio, args.probability, len(y)),
        "brier_score": brier_score(probs, y, bins=args.bins)[0],
        "brier_score_uncalibrated": brier_score(np.asarray(ensemble_score(ens, x)), y, bins=args.bins)[0],
    }
    text = json.dumps(metrics, indent=2)
    if args.out:
        Path(args.out).write_text(text + "\n")
        print(f"wrote {args.out}")
    else:
        print(text)
    return 0


def _cmd_experiment(args) -> int:
    config = ExperimentConfig.from_json(args.config) if args.config else ExperimentConfig()
    overrides = {}
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.out is not None:
        overrides["out_dir"] = args.out
    if args.bins is not None:
        overrides["bins"] = args.bins
    if args.rounds is not None:
        overrides["rounds"] = args.rounds
    if args.mode is not None:
        overrides["mode"] = args.mode
    if overrides:
        config = ExperimentConfig(**{**config.to_dict(), **overrides})
    out = RUNNERS[args.name](config)
    print(f"experiment {args.name} complete: outputs in {out}")
    return 0


_COMMANDS = {
    "generate": _cmd_generate,
    "train": _cmd_train,
    "calibrate": _cmd_calibrate,
    "triage": _cmd_triage,
    "evaluate": _cmd_evaluate,
    "experiment": _cmd_experiment,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    except FileNotFoundError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
