"""Risk mathematics: thresholds, scenario ranking, budgeted triage.

The central objects are per-contingency economic parameters (occurrence
probability, miss and false-alarm costs) and per-scenario residual
risks.  A prediction's residual risk is the smaller of the miss-side and
false-alarm-side expected costs; predictions are made to attain that
minimum, which is equivalent to thresholding the calibrated probability
at the shifted decision threshold.  Scenarios sorted by residual risk
feed the triage: the top ``budget`` scenarios are re-checked by the
exact oracle, the rest stay on the machine-learning prediction.

Cost conventions: when parameters are built from a cost ratio, the miss
cost is the ratio itself and the false-alarm cost its complement, which
makes every aggregate risk directly comparable with the test-set
residual-risk estimate.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import EmptyDatabase, MissingModel, NonPositiveCost

_PROB_CEIL = 1.0 - 1e-9


def cost_ratio(miss_cost: float, false_alarm_cost: float) -> float:
    """Skew between miss and false-alarm costs, in (0, 1)."""
    if miss_cost <= 0 or false_alarm_cost <= 0:
        raise NonPositiveCost("costs must be strictly positive")
    return miss_cost / (miss_cost + false_alarm_cost)


@dataclass(frozen=True)
class ContingencyParams:
    contingency: int
    probability: float  # chance the contingency occurs, in (0, 1)
    miss_cost: float
    false_alarm_cost: float

    def __post_init__(self):
        if not 0.0 < self.probability < 1.0:
            raise ValueError("contingency probability must be strictly inside (0, 1)")
        if self.miss_cost <= 0 or self.false_alarm_cost <= 0:
            raise NonPositiveCost("costs must be strictly positive")

    @classmethod
    def from_cost_ratio(cls, contingency: int, probability: float, ratio: float) -> "ContingencyParams":
        if not 0.0 < ratio < 1.0:
            raise ValueError("cost ratio must be strictly inside (0, 1)")
        return cls(contingency, probability, miss_cost=ratio, false_alarm_cost=1.0 - ratio)

    @property
    def ratio(self) -> float:
        return cost_ratio(self.miss_cost, self.false_alarm_cost)


def adjusted_priors(ratio: float, n_insecure: int, n_secure: int) -> tuple[float, float]:
    """Class distribution after folding the cost skew into the counts."""
    if n_insecure < 0 or n_secure < 0 or n_insecure + n_secure == 0:
        raise EmptyDatabase("class counts must be nonnegative and not both zero")
    if not 0.0 < ratio < 1.0:
        raise ValueError("cost ratio must be strictly inside (0, 1)")
    mass0 = ratio * n_insecure
    mass1 = (1.0 - ratio) * n_secure
    pi0 = mass0 / (mass0 + mass1)
    return pi0, 1.0 - pi0


def decision_threshold(params: ContingencyParams) -> float:
    """Probability cutoff above which predicting secure minimises risk."""
    num = params.miss_cost * params.probability
    return num / (num + params.false_alarm_cost * (1.0 - params.probability))


def prediction_risks(probability_estimate, params: ContingencyParams):
    """(risk of predicting secure, risk of predicting insecure)."""
    p1 = np.asarray(probability_estimate, dtype=float)
    risk_secure = params.miss_cost * params.probability * (1.0 - p1)
    risk_insecure = params.false_alarm_cost * (1.0 - params.probability) * p1
    if p1.ndim == 0:
        return float(risk_secure), float(risk_insecure)
    return risk_secure, risk_insecure


def risk_optimal_predict(probability_estimate, params: ContingencyParams):
    """Label with the smaller prediction risk, and that residual risk.

    Predicts secure exactly when the secure-side risk is strictly
    smaller, which coincides with ``p1 > threshold``; at the boundary the
    prediction is insecure.
    """
    risk_secure, risk_insecure = prediction_risks(probability_estimate, params)
    if np.ndim(risk_secure) == 0:
        if risk_secure < risk_insecure:
            return 1, risk_secure
        return 0, risk_insecure
    label = (risk_secure < risk_insecure).astype(int)
    return label, np.where(label == 1, risk_secure, risk_insecure)


def ml_severity(probability_estimate, miss_cost: float):
    """Predicted severity: miss cost weighted by the insecure probability."""
    return miss_cost * (1.0 - np.asarray(probability_estimate, dtype=float))


def residual_risk_estimate(missed_alarms: int, false_alarms: int, ratio: float,
                           probability: float, n_conditions: int) -> float:
    """Test-set estimate of the residual risk of trusting the model.

    Assumes every operating condition is equally likely (Monte Carlo
    sampling), so each condition carries weight ``1 / n_conditions``.
    """
    if missed_alarms < 0 or false_alarms < 0:
        raise ValueError("alarm counts must be nonnegative")
    if n_conditions < 1:
        raise ValueError("n_conditions must be >= 1")
    return (missed_alarms * ratio * probability
            + false_alarms * (1.0 - ratio) * (1.0 - probability)) / n_conditions


def perturb_params(params: ContingencyParams, alpha: float, target: str) -> ContingencyParams:
    """Scale the miss cost and/or occurrence probability by ``alpha``.

    Returns a new object; callers keep the original for truth evaluation.
    The scaled probability is clamped to stay inside (0, 1).
    """
    if alpha <= 0:
        raise ValueError("alpha must be > 0")
    if target not in ("costs", "probabilities", "both"):
        raise ValueError(f"unknown perturbation target {target!r}")
    miss = params.miss_cost * alpha if target in ("costs", "both") else params.miss_cost
    prob = params.probability
    if target in ("probabilities", "both"):
        prob = min(prob * alpha, _PROB_CEIL)
    return ContingencyParams(params.contingency, prob, miss, params.false_alarm_cost)


# -- scenarios and triage ------------------------------------------------------

@dataclass(frozen=True)
class Scenario:
    condition: int
    contingency: int
    condition_probability: float  # p of this operating condition occurring
    scenario_probability: float  # condition probability times contingency probability
    probability_estimate: float  # calibrated secure-class probability
    predicted_label: int
    risk: float  # condition probability times residual prediction risk


def rank_scenarios(features, condition_ids, condition_probabilities, models, params_by_contingency):
    """Score every (condition, contingency) pair and sort by falling risk.

    ``models`` maps contingency id to a CalibratedEnsemble (anything with
    a ``probability(features)`` method works); ``params_by_contingency``
    maps contingency id to ContingencyParams.  Ties break on ascending
    (contingency, condition) so the ordering is fully deterministic.
    """
    x = np.atleast_2d(np.asarray(features, dtype=float))
    ids = list(condition_ids)
    p_cond = np.asarray(condition_probabilities, dtype=float)
    if len(ids) != len(x) or len(p_cond) != len(x):
        raise ValueError("features, ids and probabilities must align")
    if abs(p_cond.sum() - 1.0) > 1e-9:
        raise ValueError("condition probabilities must sum to 1")

    scenarios = []
    for c in sorted(params_by_contingency):
        if c not in models:
            raise MissingModel(c)
        params = params_by_contingency[c]
        p1 = np.asarray(models[c].probability(x), dtype=float)
        labels, residual = risk_optimal_predict(p1, params)
        risk = p_cond * residual
        for k, cid in enumerate(ids):
            scenarios.append(
                Scenario(
                    condition=cid,
                    contingency=c,
                    condition_probability=float(p_cond[k]),
                    scenario_probability=float(p_cond[k] * params.probability),
                    probability_estimate=float(p1[k]),
                    predicted_label=int(labels[k]),
                    risk=float(risk[k]),
                )
            )
    scenarios.sort(key=lambda s: (-s.risk, s.contingency, s.condition))
    return scenarios


@dataclass
class TriageReport:
    scenarios: list[Scenario]  # descending-risk order
    budget: int
    n_high: int
    assessed_fraction: float  # share of scenarios sent to the oracle
    oracle_labels: list[int | None]  # aligned with the high-risk prefix
    conventional_risk: float  # residual risk carried by oracle results
    ml_risk: float  # residual risk carried by unverified predictions
    total_risk: float
    assessment_failures: list[int] = field(default_factory=list)  # ranks with oracle errors
    missed_alarms: dict[int, int] = field(default_factory=dict)
    false_alarms: dict[int, int] = field(default_factory=dict)
    residual_risk: dict[int, float] = field(default_factory=dict)

    @property
    def high(self) -> list[Scenario]:
        return self.scenarios[: self.n_high]

    @property
    def low(self) -> list[Scenario]:
        return self.scenarios[self.n_high:]


def triage(ranked, budget: int, oracle, params_by_contingency, true_labels=None,
           n_conditions: int | None = None) -> TriageReport:
    """Assess the top-``budget`` scenarios with the oracle, keep the rest on ML.

    ``oracle(condition_id, contingency_id) -> 0/1``; an oracle exception
    marks that scenario's severity unknown (it stays in the high-risk
    set, flagged in ``assessment_failures``) and never aborts the run.
    When ``true_labels(condition_id, contingency_id)`` is supplied, the
    unverified predictions are graded and the per-contingency residual
    risk estimate is computed over the low-risk set only.
    """
    if budget < 0:
        raise ValueError("budget must be >= 0")
    ranked = list(ranked)
    n_high = min(budget, len(ranked))
    oracle_labels: list[int | None] = []
    failures = []
    conventional = 0.0
    for rank, scn in enumerate(ranked[:n_high]):
        try:
            label = int(oracle(scn.condition, scn.contingency))
        except Exception:
            oracle_labels.append(None)
            failures.append(rank)
            continue
        oracle_labels.append(label)
        if label == 0:  # binary severity: miss cost when insecure, else zero
            conventional += scn.scenario_probability * params_by_contingency[scn.contingency].miss_cost

    ml = float(sum(s.risk for s in ranked[n_high:]))
    report = TriageReport(
        scenarios=ranked,
        budget=budget,
        n_high=n_high,
        assessed_fraction=n_high / len(ranked) if ranked else 0.0,
        oracle_labels=oracle_labels,
        conventional_risk=conventional,
        ml_risk=ml,
        total_risk=conventional + ml,
        assessment_failures=failures,
    )

    if true_labels is not None:
        contingencies = sorted(params_by_contingency)
        missed = {c: 0 for c in contingencies}
        false = {c: 0 for c in contingencies}
        for scn in ranked[n_high:]:
            truth = int(true_labels(scn.condition, scn.contingency))
            if truth == 0 and scn.predicted_label == 1:
                missed[scn.contingency] += 1
            elif truth == 1 and scn.predicted_label == 0:
                false[scn.contingency] += 1
        if n_conditions is None:
            n_conditions = len({s.condition for s in ranked})
        report.missed_alarms = missed
        report.false_alarms = false
        report.residual_risk = {
            c: residual_risk_estimate(missed[c], false[c], params_by_contingency[c].ratio,
                                      params_by_contingency[c].probability, n_conditions)
            for c in contingencies
        }
    return report


def triage_csv(report: TriageReport, path) -> None:
    lines = ["rank,scenario,condition,contingency,p_hat,label_pred,risk,in_high_set,oracle_label"]
    for rank, scn in enumerate(report.scenarios):
        in_high = rank < report.n_high
        oracle_label = ""
        if in_high:
            val = report.oracle_labels[rank]
            oracle_label = "" if val is None else str(val)
        lines.append(
            f"{rank},{scn.condition}:{scn.contingency},{scn.condition},{scn.contingency},"
            f"{scn.probability_estimate:.17g},{scn.predicted_label},{scn.risk:.17g},"
            f"{int(in_high)},{oracle_label}"
        )
    Path(path).write_text("\n".join(lines) + "\n")


# -- budget-sweep curves -------------------------------------------------------

def residual_error_curves(contingencies, predicted, truth, params_by_contingency,
                          n_conditions: int, budgets=None):
    """Errors and residual risk left after assessing the first S scenarios.

    The three arrays describe scenarios in assessment order.  Returns
    ``(budgets, missed, false_alarms, risk)`` where entry ``k`` counts
    only the scenarios beyond ``budgets[k]`` (assessed ones are corrected
    by the oracle and carry no residual error).
    """
    c_ids = np.asarray(contingencies)
    pred = np.asarray(predicted, dtype=int)
    true = np.asarray(truth, dtype=int)
    n = len(c_ids)
    if budgets is None:
        budgets = np.arange(n + 1)
    budgets = np.asarray(budgets, dtype=int)
    if np.any(budgets < 0) or np.any(budgets > n):
        raise ValueError("budgets must lie in [0, number of scenarios]")

    is_missed = ((true == 0) & (pred == 1)).astype(float)
    is_false = ((true == 1) & (pred == 0)).astype(float)
    weight = np.empty(n)
    for c in np.unique(c_ids):
        p = params_by_contingency[int(c)]
        mask = c_ids == c
        weight[mask] = np.where(
            is_missed[mask] > 0, p.ratio * p.probability / n_conditions,
            np.where(is_false[mask] > 0, (1.0 - p.ratio) * (1.0 - p.probability) / n_conditions, 0.0),
        )
    def suffix(a):
        return np.concatenate([np.cumsum(a[::-1])[::-1], [0.0]])

    missed_left = suffix(is_missed)[budgets]
    false_left = suffix(is_false)[budgets]
    risk_left = suffix(weight)[budgets]
    return budgets, missed_left.astype(int), false_left.astype(int), risk_left


def random_assessment_order(n_scenarios: int, seed: int) -> np.ndarray:
    """Uniformly random verification order (no-ML baseline)."""
    return np.random.default_rng([seed, 101]).permutation(n_scenarios)


def secure_first_order(predicted, seed: int) -> np.ndarray:
    """Predicted-secure scenarios first, random order inside each group."""
    pred = np.asarray(predicted, dtype=int)
    rng = np.random.default_rng([seed, 202])
    secure = np.flatnonzero(pred == 1)
    insecure = np.flatnonzero(pred == 0)
    return np.concatenate([rng.permutation(secure), rng.permutation(insecure)])


# -- contingencies.json --------------------------------------------------------

def load_contingency_params(path) -> dict[int, ContingencyParams]:
    """Read ``contingencies.json``: a list of per-contingency entries.

    Each entry names a line id and probability, plus either ``cost_ratio``
    or the pair ``c_f1``/``c_f0``.
    """
    import json

    from .errors import MalformedFile

    try:
        entries = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise MalformedFile(f"invalid JSON in contingency file: {exc}", line=exc.lineno) from exc
    out: dict[int, ContingencyParams] = {}
    try:
        for entry in entries:
            line_id = int(entry["line_id"])
            prob = float(entry["p_c"])
            if "cost_ratio" in entry:
                params = ContingencyParams.from_cost_ratio(line_id, prob, float(entry["cost_ratio"]))
            else:
                params = ContingencyParams(line_id, prob, float(entry["c_f1"]), float(entry["c_f0"]))
            out[line_id] = params
    except (KeyError, TypeError, ValueError) as exc:
        raise MalformedFile(f"bad contingency entry: {exc}") from exc
    if not out:
        raise MalformedFile("contingency file lists no contingencies")
    return out


def save_contingency_params(params: dict[int, ContingencyParams], path) -> None:
    import json

    doc = [
        {"line_id": p.contingency, "p_c": p.probability, "c_f1": p.miss_cost, "c_f0": p.false_alarm_cost}
        for _, p in sorted(params.items())
    ]
    Path(path).write_text(json.dumps(doc, indent=2) + "\n")


def uniform_condition_probabilities(n: int) -> np.ndarray:
    """Equal condition likelihoods for Monte Carlo test sets."""
    if n < 1:
        raise ValueError("need at least one condition")
    return np.full(n, 1.0 / n)
