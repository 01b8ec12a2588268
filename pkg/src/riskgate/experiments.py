"""Configuration-driven experiment runners.

Each runner regenerates (or reuses, via an in-process cache) a labeled
pool of operating conditions, trains whatever models it needs, and
writes machine-readable CSVs plus a ``manifest.json`` (config hash,
seed, version, measured extras) into its own output directory.  All
randomness flows from the config seed through named substreams, so a
rerun with the same config is byte-identical.

Repetitions are implemented as seeded re-splits of one generated pool:
repetition ``r`` permutes the pool with stream ``(seed, 7000 + r)`` and
re-cuts train/calibration/test at the configured sizes.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import __version__
from .calibration import CalibratedEnsemble, brier_score, fit_platt, reliability_csv
from .errors import SingleClassCalibration, SingleClassData
from .grid import GridModel, six_bus
from .learner import (
    Ensemble,
    ensemble_score,
    ensemble_vote,
    train_adaboost,
    train_single_tree,
    train_stump,
    tree_predict,
    tree_proba,
)
from .risk_engine import (
    ContingencyParams,
    decision_threshold,
    perturb_params,
    random_assessment_order,
    rank_scenarios,
    residual_error_curves,
    residual_risk_estimate,
    secure_first_order,
    uniform_condition_probabilities,
)
from .scenario_gen import LabeledDatabase, build_database

ALL_LINES = tuple(range(1, 12))

# Parameter sets the per-contingency draws come from.
PROBABILITY_CHOICES = (0.00001, 0.00005, 0.0001, 0.0005)
COST_RATIO_CHOICES = (500.0 / 501.0, 1000.0 / 1001.0, 5000.0 / 5001.0, 10000.0 / 10001.0)

COST_RATIO_GRID = (2.0 / 3.0, 5.0 / 6.0, 10.0 / 11.0, 50.0 / 51.0, 100.0 / 101.0, 500.0 / 501.0, 1000.0 / 1001.0)

TRIAGE_CONTINGENCY = 3
TRIAGE_PARAMS = ContingencyParams.from_cost_ratio(3, 0.0002, 10000.0 / 10001.0)
PAIR_PARAMS = {
    3: TRIAGE_PARAMS,
    5: ContingencyParams.from_cost_ratio(5, 0.0003, 500.0 / 501.0),
}

EXPERIMENT_NAMES = ("imbalance", "calibration", "threshold", "triage", "multi", "sensitivity")


@dataclass(frozen=True)
class ExperimentConfig:
    n: int = 5875
    splits: tuple[int, int, int] = (3500, 875, 1500)
    seed: int = 101
    rounds: int = 100
    # Vote-share scoring: the logistic-margin score saturates at {0, 1},
    # leaving calibration nothing to repair and ranking errors last.
    mode: str = "samme"
    k_folds: int = 3
    max_tree_depth: int = 3
    bins: int = 10
    repetitions: int = 10
    alpha: float = 10.0
    alpha_target: str = "both"
    out_dir: str = "out"

    def __post_init__(self):
        object.__setattr__(self, "splits", tuple(int(v) for v in self.splits))
        if sum(self.splits) != self.n:
            raise ValueError(f"splits {self.splits} must sum to n={self.n}")
        if self.mode not in ("samme", "samme.r"):
            raise ValueError(f"unknown boosting mode {self.mode!r}")
        if self.alpha_target not in ("costs", "probabilities", "both"):
            raise ValueError(f"unknown perturbation target {self.alpha_target!r}")

    @classmethod
    def from_json(cls, path) -> "ExperimentConfig":
        from .errors import MalformedFile

        try:
            doc = json.loads(Path(path).read_text())
        except json.JSONDecodeError as exc:
            raise MalformedFile(f"invalid JSON in config: {exc}", line=exc.lineno) from exc
        try:
            if "splits" in doc:
                doc["splits"] = tuple(int(v) for v in doc["splits"])
            return cls(**doc)
        except TypeError as exc:
            raise MalformedFile(f"bad config field: {exc}") from exc

    def to_dict(self) -> dict:
        return {
            "n": self.n, "splits": list(self.splits), "seed": self.seed,
            "rounds": self.rounds, "mode": self.mode, "k_folds": self.k_folds,
            "max_tree_depth": self.max_tree_depth, "bins": self.bins,
            "repetitions": self.repetitions, "alpha": self.alpha,
            "alpha_target": self.alpha_target, "out_dir": str(self.out_dir),
        }


def budget_sweep(n_scenarios: int, stride_threshold: int = 3000, stride: int = 100) -> np.ndarray:
    """Every integer budget up to the threshold, then strided (end included)."""
    if n_scenarios <= stride_threshold:
        return np.arange(n_scenarios + 1)
    budgets = np.arange(0, n_scenarios + 1, stride)
    if budgets[-1] != n_scenarios:
        budgets = np.append(budgets, n_scenarios)
    return budgets


# -- shared pool and model building ---------------------------------------

_POOL_CACHE: dict[tuple, LabeledDatabase] = {}


def generation_pool(config: ExperimentConfig, grid: GridModel | None = None) -> LabeledDatabase:
    """Labeled pool shared by all runners for a given (seed, n, splits)."""
    key = (config.seed, config.n, config.splits)
    if key not in _POOL_CACHE:
        _POOL_CACHE[key] = build_database(
            grid or six_bus(), n=config.n, contingencies=ALL_LINES,
            seed=config.seed, splits=config.splits,
        )
    return _POOL_CACHE[key]


def _resplit(db: LabeledDatabase, config: ExperimentConfig, repetition: int):
    """Permuted (train, calib, test) index arrays for one repetition."""
    perm = np.random.default_rng([config.seed, 7000 + repetition]).permutation(len(db))
    a, b, _ = config.splits
    return perm[:a], perm[a: a + b], perm[a + b:]


def _constant_ensemble(label: int) -> Ensemble:
    stump = train_stump(np.zeros((2, 1)), [label, label])
    return Ensemble(mode="samme.r", stumps=[stump], weights=None)


def fit_contingency_model(db, train_idx, calib_idx, contingency, config) -> CalibratedEnsemble:
    """Train + calibrate one per-contingency model; degrade gracefully.

    A single-class training split yields a constant-score ensemble and a
    single-class calibration split leaves the score uncalibrated; both
    keep multi-contingency sweeps running when a contingency is (almost)
    always secure in the generated pool.
    """
    x = db.features_matrix()
    y = db.label_vector(contingency)
    try:
        ens = train_adaboost(x[train_idx], y[train_idx], rounds=config.rounds,
                             mode=config.mode, k_folds=config.k_folds)
    except SingleClassData:
        ens = _constant_ensemble(int(y[train_idx][0]))
    params = None
    try:
        params = fit_platt(ensemble_score(ens, x[calib_idx]), y[calib_idx])
    except SingleClassCalibration:
        params = None
    return CalibratedEnsemble(ensemble=ens, contingency=contingency, params=params)


def draw_contingency_params(contingencies, seed: int) -> dict[int, ContingencyParams]:
    """Seeded draw of (probability, cost ratio) from the shipped choice sets."""
    rng = np.random.default_rng([seed, 4242])
    out = {}
    for c in contingencies:
        prob = float(rng.choice(PROBABILITY_CHOICES))
        ratio = float(rng.choice(COST_RATIO_CHOICES))
        out[c] = ContingencyParams.from_cost_ratio(c, prob, ratio)
    return out


def _write_manifest(config: ExperimentConfig, experiment: str, out_dir: Path, extras: dict) -> None:
    doc = config.to_dict()
    payload = {
        "experiment": experiment,
        "version": __version__,
        "seed": config.seed,
        "config": doc,
        "config_hash": hashlib.sha256(json.dumps(doc, sort_keys=True).encode()).hexdigest(),
        "extras": extras,
    }
    (out_dir / "manifest.json").write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")


def _write_csv(path: Path, header: str, rows) -> None:
    path.write_text("\n".join([header] + [",".join(str(v) for v in row) for row in rows]) + "\n")


def _error_rates(pred, truth):
    """(overall error, false-alarm rate, missed-alarm rate), per-class rates."""
    pred = np.asarray(pred, dtype=int)
    truth = np.asarray(truth, dtype=int)
    overall = float(np.mean(pred != truth))
    secure = truth == 1
    insecure = ~secure
    false_alarm = float(np.mean(pred[secure] == 0)) if secure.any() else 0.0
    missed_alarm = float(np.mean(pred[insecure] == 1)) if insecure.any() else 0.0
    return overall, false_alarm, missed_alarm


# -- study 1: class imbalance --------------------------------------------------

def run_imbalance_study(config: ExperimentConfig, out_dir=None) -> Path:
    """Per-class test errors of a depth-limited tree on lines 5 and 6."""
    out = Path(out_dir or config.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    db = generation_pool(config)
    x = db.features_matrix()
    contingencies = (5, 6)

    rows = []
    sums = {c: np.zeros(3) for c in contingencies}
    for rep in range(config.repetitions):
        train_idx, _, test_idx = _resplit(db, config, rep)
        for c in contingencies:
            y = db.label_vector(c)
            tree = train_single_tree(x[train_idx], y[train_idx], max_depth=config.max_tree_depth)
            rates = _error_rates(tree_predict(tree, x[test_idx]), y[test_idx])
            sums[c] += rates
            rows.append((rep, c, f"{rates[0]:.17g}", f"{rates[1]:.17g}", f"{rates[2]:.17g}"))
    for c in contingencies:
        mean = sums[c] / config.repetitions
        rows.append(("mean", c, f"{mean[0]:.17g}", f"{mean[1]:.17g}", f"{mean[2]:.17g}"))

    _write_csv(out / "imbalance.csv", "repetition,contingency,test_error,false_alarm_rate,missed_alarm_rate", rows)
    extras = {
        "pool_priors": {str(c): {"insecure": db.priors(c)[0], "secure": db.priors(c)[1]} for c in contingencies},
        "mean_rates": {str(c): list(sums[c] / config.repetitions) for c in contingencies},
    }
    _write_manifest(config, "imbalance", out, extras)
    return out


# -- study 2: calibration -------------------------------------------------

def run_calibration_study(config: ExperimentConfig, out_dir=None, contingency: int = 6,
                          score_mode: str = "samme") -> Path:
    """Brier score of raw scores vs calibrated probabilities on the test set.

    The uncalibrated score here is the discrete weighted-vote share
    (``score_mode="samme"``), whose compression away from 0/1 is exactly
    the distortion calibration exists to repair; the real-valued mode's
    logistic margin is already near-calibrated and shows no effect.
    """
    out = Path(out_dir or config.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    study_config = ExperimentConfig(**{**config.to_dict(), "mode": score_mode})
    db = generation_pool(config)
    x = db.features_matrix()
    y = db.label_vector(contingency)

    rows = []
    total = np.zeros(2)
    for rep in range(config.repetitions):
        train_idx, calib_idx, test_idx = _resplit(db, config, rep)
        model = fit_contingency_model(db, train_idx, calib_idx, contingency, study_config)
        scores = model.score(x[test_idx])
        probs = model.probability(x[test_idx])
        b_raw, bins_raw = brier_score(scores, y[test_idx], bins=config.bins)
        b_cal, bins_cal = brier_score(probs, y[test_idx], bins=config.bins)
        total += (b_raw, b_cal)
        rows.append((rep, f"{b_raw:.17g}", f"{b_cal:.17g}"))
        if rep == 0:
            reliability_csv(bins_raw, out / "reliability_uncalibrated.csv")
            reliability_csv(bins_cal, out / "reliability_calibrated.csv")
    mean = total / config.repetitions
    rows.append(("mean", f"{mean[0]:.17g}", f"{mean[1]:.17g}"))

    _write_csv(out / "brier.csv", "repetition,uncalibrated,calibrated", rows)
    _write_manifest(config, "calibration", out, {
        "contingency": contingency,
        "mean_uncalibrated": mean[0],
        "mean_calibrated": mean[1],
    })
    return out


# -- study 3: decision threshold --------------------------------------------

def _threshold_variants(db, x, train_idx, calib_idx, test_idx, contingency, config):
    """Predict-probability pairs per classifier variant for one repetition."""
    y = db.label_vector(contingency)
    tree = train_single_tree(x[train_idx], y[train_idx], max_depth=config.max_tree_depth)
    model = fit_contingency_model(db, train_idx, calib_idx, contingency, config)
    xt = x[test_idx]
    return {
        "dt": (tree_predict(tree, xt), None),
        "dt_threshold": (None, tree_proba(tree, xt)),
        "adaboost": (ensemble_vote(model.ensemble, xt), None),
        "adaboost_threshold": (None, model.score(xt)),
        "calibrated_threshold": (None, model.probability(xt)),
    }


def run_threshold_study(config: ExperimentConfig, out_dir=None, contingency: int = 6) -> Path:
    """Residual-risk grid over cost ratios for five classifier variants.

    The contingency probability is identified with the insecure-class
    prior of the training split, and the whole test set stays on machine
    learning (no conventional assessments).
    """
    out = Path(out_dir or config.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    db = generation_pool(config)
    x = db.features_matrix()
    y = db.label_vector(contingency)

    variants = ("dt", "dt_threshold", "adaboost", "adaboost_threshold", "calibrated_threshold")
    totals = {(v, ratio): 0.0 for v in variants for ratio in COST_RATIO_GRID}
    for rep in range(config.repetitions):
        train_idx, calib_idx, test_idx = _resplit(db, config, rep)
        # contingency probability identified with the insecure-class prior
        prior_insecure = float(np.mean(y[train_idx] == 0))
        preds = _threshold_variants(db, x, train_idx, calib_idx, test_idx, contingency, config)
        truth = y[test_idx]
        for ratio in COST_RATIO_GRID:
            params = ContingencyParams.from_cost_ratio(contingency, prior_insecure, ratio)
            z = decision_threshold(params)
            for variant in variants:
                fixed, proba = preds[variant]
                labels = fixed if proba is None else (proba > z).astype(int)
                missed = int(np.sum((truth == 0) & (labels == 1)))
                false = int(np.sum((truth == 1) & (labels == 0)))
                totals[(variant, ratio)] += residual_risk_estimate(
                    missed, false, ratio, prior_insecure, len(test_idx))

    rows = [
        (variant, f"{ratio:.17g}", f"{totals[(variant, ratio)] / config.repetitions:.17g}")
        for variant in variants for ratio in COST_RATIO_GRID
    ]
    _write_csv(out / "threshold_risk.csv", "variant,cost_ratio,mean_risk", rows)
    _write_manifest(config, "threshold", out, {
        "contingency": contingency,
        "cost_ratios": [f"{r:.17g}" for r in COST_RATIO_GRID],
        "variants": list(variants),
    })
    return out


# -- study 4: single-contingency triage -----------------------------------------

def _proposed_order(db, test_idx, models, params_by_c):
    """Risk-ranked scenario arrays (contingency, prediction, truth)."""
    x = db.features_matrix()[test_idx]
    ids = list(range(len(test_idx)))
    ranked = rank_scenarios(x, ids, uniform_condition_probabilities(len(ids)), models, params_by_c)
    truth_by_c = {c: db.label_vector(c)[test_idx] for c in params_by_c}
    cont = np.array([s.contingency for s in ranked])
    pred = np.array([s.predicted_label for s in ranked])
    truth = np.array([truth_by_c[s.contingency][s.condition] for s in ranked])
    return ranked, cont, pred, truth


def _flat_scenarios(db, test_idx, contingencies):
    """Scenario arrays in canonical (contingency-major) order."""
    cont, cond = [], []
    for c in sorted(contingencies):
        cont.extend([c] * len(test_idx))
        cond.extend(range(len(test_idx)))
    return np.array(cont), np.array(cond)


def run_triage_study(config: ExperimentConfig, out_dir=None) -> Path:
    """Budgeted verification curves for the three assessment strategies."""
    out = Path(out_dir or config.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    db = generation_pool(config)
    c = TRIAGE_CONTINGENCY
    params_by_c = {c: TRIAGE_PARAMS}
    train_idx, calib_idx, test_idx = _resplit(db, config, 0)
    y = db.label_vector(c)
    truth_test = y[test_idx]
    n_test = len(test_idx)
    budgets = budget_sweep(n_test)

    model = fit_contingency_model(db, train_idx, calib_idx, c, config)
    _, cont_rank, pred_rank, truth_rank = _proposed_order(db, test_idx, {c: model}, params_by_c)
    curves = {}
    curves["proposed"] = residual_error_curves(cont_rank, pred_rank, truth_rank, params_by_c, n_test, budgets)

    votes = ensemble_vote(model.ensemble, db.features_matrix()[test_idx])
    order = secure_first_order(votes, config.seed)
    curves["standard"] = residual_error_curves(
        np.full(n_test, c)[order], votes[order], truth_test[order], params_by_c, n_test, budgets)

    majority = int(np.mean(y[train_idx]) >= 0.5)
    naive = np.full(n_test, majority)
    order = random_assessment_order(n_test, config.seed)
    curves["no_ml"] = residual_error_curves(
        np.full(n_test, c)[order], naive[order], truth_test[order], params_by_c, n_test, budgets)

    extras = {"contingency": c, "n_test": n_test}
    for name, (bud, missed, false, risk) in curves.items():
        rows = [(int(s), int(m), int(f), f"{r:.17g}") for s, m, f, r in zip(bud, missed, false, risk)]
        _write_csv(out / f"triage_{name}.csv", "budget,missed_alarms,false_alarms,residual_risk", rows)
        errors = missed + false
        zero = np.flatnonzero(errors == 0)
        extras[f"{name}_errors_at_zero"] = int(errors[0])
        extras[f"{name}_first_zero_budget"] = int(bud[zero[0]]) if len(zero) else None
    _write_manifest(config, "triage", out, extras)
    return out


# -- study 5: several contingencies ---------------------------------------------

def _multi_curves(db, config, contingencies, params_by_c, out, prefix, perturbed=None):
    """Proposed + standard-classifier curves over a joint scenario set.

    ``perturbed`` optionally maps contingency to the parameter set used
    for ranking/thresholding, while ``params_by_c`` always carries the
    true parameters used for risk evaluation.
    """
    train_idx, calib_idx, test_idx = _resplit(db, config, 0)
    n_test = len(test_idx)
    models = {c: fit_contingency_model(db, train_idx, calib_idx, c, config) for c in contingencies}
    n_scenarios = n_test * len(contingencies)
    budgets = budget_sweep(n_scenarios)

    ranking_params = perturbed or params_by_c
    _, cont_rank, pred_rank, truth_rank = _proposed_order(db, test_idx, models, ranking_params)
    proposed = residual_error_curves(cont_rank, pred_rank, truth_rank, params_by_c, n_test, budgets)

    cont_flat, cond_flat = _flat_scenarios(db, test_idx, contingencies)
    x_test = db.features_matrix()[test_idx]
    votes = np.concatenate([ensemble_vote(models[c].ensemble, x_test) for c in sorted(contingencies)])
    truth_flat = np.concatenate([db.label_vector(c)[test_idx] for c in sorted(contingencies)])
    order = secure_first_order(votes, config.seed)
    standard = residual_error_curves(
        cont_flat[order], votes[order], truth_flat[order], params_by_c, n_test, budgets)

    results = {}
    for name, (bud, missed, false, risk) in (("proposed", proposed), ("standard", standard)):
        rows = [(int(s), int(m), int(f), f"{r:.17g}") for s, m, f, r in zip(bud, missed, false, risk)]
        _write_csv(out / f"{prefix}_{name}.csv", "budget,missed_alarms,false_alarms,residual_risk", rows)
        results[name] = (bud, missed, false, risk)
    return results


def run_multi_contingency_study(config: ExperimentConfig, out_dir=None) -> Path:
    """Joint triage across two contingencies and across all eleven lines."""
    out = Path(out_dir or config.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    db = generation_pool(config)

    pair = _multi_curves(db, config, sorted(PAIR_PARAMS), PAIR_PARAMS, out, "multi2")
    drawn = draw_contingency_params(ALL_LINES, config.seed)
    full = _multi_curves(db, config, ALL_LINES, drawn, out, "multi11")

    extras = {
        "pair_contingencies": sorted(PAIR_PARAMS),
        "drawn_params": {
            str(c): {"p_c": p.probability, "cost_ratio": p.ratio} for c, p in sorted(drawn.items())
        },
    }
    for prefix, results in (("multi2", pair), ("multi11", full)):
        bud, missed, false, risk = results["proposed"]
        errors = missed + false
        zero = np.flatnonzero(errors == 0)
        extras[f"{prefix}_errors_at_zero"] = int(errors[0])
        extras[f"{prefix}_first_zero_budget"] = int(bud[zero[0]]) if len(zero) else None
        extras[f"{prefix}_risk_at_zero"] = float(risk[0])
    _write_manifest(config, "multi", out, extras)
    return out


# -- study 6: parameter sensitivity ---------------------------------------------

def run_sensitivity_study(config: ExperimentConfig, out_dir=None) -> Path:
    """True-risk curves when ranking uses distorted costs/probabilities."""
    out = Path(out_dir or config.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    db = generation_pool(config)
    true_params = draw_contingency_params(ALL_LINES, config.seed)
    train_idx, calib_idx, test_idx = _resplit(db, config, 0)
    n_test = len(test_idx)
    models = {c: fit_contingency_model(db, train_idx, calib_idx, c, config) for c in ALL_LINES}
    budgets = budget_sweep(n_test * len(ALL_LINES))

    def proposed_curve(ranking_params):
        _, cont, pred, truth = _proposed_order(db, test_idx, models, ranking_params)
        return residual_error_curves(cont, pred, truth, true_params, n_test, budgets)

    alpha = config.alpha
    curve_specs = {
        "unperturbed": true_params,
        "cost_up": {c: perturb_params(p, alpha, "costs") for c, p in true_params.items()},
        "cost_down": {c: perturb_params(p, 1.0 / alpha, "costs") for c, p in true_params.items()},
        "prob_up": {c: perturb_params(p, alpha, "probabilities") for c, p in true_params.items()},
        "prob_down": {c: perturb_params(p, 1.0 / alpha, "probabilities") for c, p in true_params.items()},
        "superposed": {c: perturb_params(p, alpha, "both") for c, p in true_params.items()},
    }

    target_curve = {"costs": "cost_up", "probabilities": "prob_up", "both": "superposed"}[config.alpha_target]
    rows = []
    extras = {"alpha": alpha, "target_curve": target_curve}
    for name, ranking_params in curve_specs.items():
        bud, _, _, risk = proposed_curve(ranking_params)
        rows += [(name, int(s), f"{r:.17g}") for s, r in zip(bud, risk)]
        extras[f"{name}_risk_at_zero"] = float(risk[0])

    cont_flat, _ = _flat_scenarios(db, test_idx, ALL_LINES)
    x_test = db.features_matrix()[test_idx]
    votes = np.concatenate([ensemble_vote(models[c].ensemble, x_test) for c in sorted(ALL_LINES)])
    truth_flat = np.concatenate([db.label_vector(c)[test_idx] for c in sorted(ALL_LINES)])
    order = secure_first_order(votes, config.seed)
    bud, _, _, risk = residual_error_curves(
        cont_flat[order], votes[order], truth_flat[order], true_params, n_test, budgets)
    rows += [("standard", int(s), f"{r:.17g}") for s, r in zip(bud, risk)]
    extras["standard_risk_at_zero"] = float(risk[0])

    _write_csv(out / "sensitivity.csv", "curve,budget,residual_risk", rows)
    _write_manifest(config, "sensitivity", out, extras)
    return out


RUNNERS = {
    "imbalance": run_imbalance_study,
    "calibration": run_calibration_study,
    "threshold": run_threshold_study,
    "triage": run_triage_study,
    "multi": run_multi_contingency_study,
    "sensitivity": run_sensitivity_study,
}
