"""Cost-sensitive calibrated security classification and risk-ranked triage."""

__version__ = "0.1.0"

from .grid import (  # noqa: F401
    Bus,
    DispatchSolution,
    FlowSolution,
    Generator,
    GridModel,
    Line,
    assess_security,
    load_grid,
    save_grid,
    six_bus,
    solve_dc_power_flow,
    solve_dcopf,
)
from .scenario_gen import (  # noqa: F401
    LabeledDatabase,
    OperatingCondition,
    build_database,
    load_database,
    sample_loads,
    save_database,
)
from .learner import (  # noqa: F401
    Ensemble,
    SingleTree,
    Stump,
    ensemble_score,
    ensemble_vote,
    load_model,
    save_model,
    train_adaboost,
    train_single_tree,
    train_stump,
    tree_predict,
)
from .calibration import (  # noqa: F401
    CalibratedEnsemble,
    PlattParams,
    brier_score,
    calibrated_probability,
    fit_platt,
)
from .risk_engine import (  # noqa: F401
    ContingencyParams,
    Scenario,
    TriageReport,
    adjusted_priors,
    cost_ratio,
    decision_threshold,
    ml_severity,
    perturb_params,
    prediction_risks,
    rank_scenarios,
    residual_risk_estimate,
    risk_optimal_predict,
    triage,
)
