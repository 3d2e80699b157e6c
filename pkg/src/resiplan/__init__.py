"""Robust proactive hardening planner for multi-region outage resilience.

Plans budget-constrained protection decisions that minimize the worst-case
outage cost over calibrated, distribution-free uncertainty sets, with the
reactive response co-optimized inside the worst case.
"""

from ._accel import NUMBA_ENABLED, backend_name
from .bench import (
    BenchConfig,
    BenchReport,
    Forecast,
    evaluate_recourse,
    make_forecast,
    plan_cooptimized,
    plan_proactive_only,
    run_benchmark,
    sensitivity_sweep,
)
from .conformal import (
    CalibrationScores,
    ObservationSet,
    Regressor,
    build_uncertainty_set,
    conformal_quantile,
    empirical_coverage,
    fit_regressor,
    nonconformity_scores,
    predict,
    split_observations,
)
from .lp import LinearProgram, LpSolution, solve_lp, solve_milp, to_lp_format
from .model import (
    Decision,
    Instance,
    UncertaintySet,
    feasible_proactive,
    feasible_reactive,
    membership,
    outage_cost,
    uncertainty_variant,
)
from .simulator import (
    SirConfig,
    SirTrajectory,
    default_config,
    disruption_rate,
    generate_dataset,
    simulate_outages,
    simulate_sir,
    weather_field,
)
from .solver import (
    PlanResult,
    RecourseSolution,
    SubproblemSolution,
    benders_solve,
    enumerate_solve,
    recourse_binary,
    recourse_lp,
    subgradient,
    subproblem,
    worst_case_value,
)

__version__ = "0.1.0"
