"""Benchmarking protocol: deterministic planners vs the worst-case planner.

Two deterministic baselines plan against a point forecast of outages:
proactive-only (a budgeted knapsack over regions) and co-optimized
(proactive and reactive actions chosen together against the same point
forecast). Four forecast generators feed them. Every planner's actions are
then scored two ways: by the exact worst-case cost over three variants of
the calibrated uncertainty set (epigraph oracle), and by realized cost
under fixed outage scenarios built from historical moments. The driver
averages over held-out evaluation samples, rebuilding the uncertainty set
per sample from its feature matrix.

Each benchmark cell is a pure function of (config, seed); fixed seeds give
byte-identical reports. Wall-clock figures are collected separately from
the deterministic tables.
"""

from __future__ import annotations

import io
import time
from dataclasses import dataclass, field, replace

import numpy as np

from .conformal import (
    ObservationSet,
    Regressor,
    fit_regressor,
    nonconformity_scores,
    predict,
    split_observations,
)
from .errors import CalibrationError
from .lp import LE, LinearProgram, solve_milp
from .model import (
    VARIANT_FULL,
    VARIANT_GLOBAL_ONLY,
    VARIANT_LOCAL_ONLY,
    Instance,
    UncertaintySet,
)
from .simulator import default_config, generate_dataset
from .solver import benders_solve, recourse_binary, worst_case_value

FORECAST_EMPIRICAL_AVERAGE = "empirical_average"
FORECAST_EMPIRICAL_CONSERVATIVE = "empirical_conservative"
FORECAST_CONFORMAL_AVERAGE = "conformal_average"
FORECAST_CONFORMAL_CONSERVATIVE = "conformal_conservative"
FORECAST_METHODS = (
    FORECAST_EMPIRICAL_AVERAGE,
    FORECAST_EMPIRICAL_CONSERVATIVE,
    FORECAST_CONFORMAL_AVERAGE,
    FORECAST_CONFORMAL_CONSERVATIVE,
)

PLANNER_PROACTIVE = "proactive_only"
PLANNER_COOPT = "cooptimized"
PLANNER_TRILEVEL = "trilevel"

CRITERION_WORST_CASE = "worst_case"
CRITERION_RECOURSE = "recourse"

WORST_CASE_VARIANTS = (VARIANT_LOCAL_ONLY, VARIANT_GLOBAL_ONLY, VARIANT_FULL)
RECOURSE_VARIANTS = ("eta", "eta_plus_sigma", "eta_plus_2sigma")


@dataclass(frozen=True)
class Forecast:
    """A point forecast of per-region outages and the method that made it."""

    u_hat: np.ndarray
    method: str

    def __post_init__(self):
        u_hat = np.asarray(self.u_hat, dtype=float)
        if not np.all(np.isfinite(u_hat)) or np.any(u_hat < 0):
            raise ValueError("forecast must be finite and nonnegative")
        u_hat.setflags(write=False)
        object.__setattr__(self, "u_hat", u_hat)


def make_forecast(
    method: str,
    data: ObservationSet = None,
    model: Regressor = None,
    omega: UncertaintySet = None,
) -> Forecast:
    """Build a point forecast.

    ``empirical_average`` and ``empirical_conservative`` use the sample mean
    and mean + 1.96 sigma of ``data`` (sigma with denominator m-1).
    ``conformal_average`` averages the model's predictions over ``data``
    (pass the training split). ``conformal_conservative`` takes the upper
    local bounds of ``omega``.
    """
    if method == FORECAST_EMPIRICAL_AVERAGE:
        if data is None or len(data) < 1:
            raise CalibrationError("empirical_average needs observations")
        return Forecast(u_hat=data.U.mean(axis=0), method=method)
    if method == FORECAST_EMPIRICAL_CONSERVATIVE:
        if data is None or len(data) < 2:
            raise CalibrationError("empirical_conservative needs at least 2 observations")
        eta = data.U.mean(axis=0)
        sigma = data.U.std(axis=0, ddof=1)
        return Forecast(u_hat=eta + 1.96 * sigma, method=method)
    if method == FORECAST_CONFORMAL_AVERAGE:
        if data is None or model is None:
            raise CalibrationError("conformal_average needs a model and training data")
        preds = np.array([predict(model, w) for w in data.W])
        return Forecast(u_hat=preds.mean(axis=0), method=method)
    if method == FORECAST_CONFORMAL_CONSERVATIVE:
        if omega is None:
            raise CalibrationError("conformal_conservative needs an uncertainty set")
        return Forecast(u_hat=omega.local_upper, method=method)
    raise ValueError(f"unknown forecast method {method!r}")


def plan_proactive_only(inst: Instance, forecast: Forecast) -> np.ndarray:
    """Budgeted knapsack: protect the regions with the largest cost at risk."""
    weights = inst.h * forecast.u_hat
    nv = inst.n
    lp = LinearProgram(
        "max",
        weights,
        [(inst.b, LE, inst.B)],
        var_bounds=np.column_stack([np.zeros(nv), np.ones(nv)]),
        integrality=np.ones(nv, dtype=bool),
    )
    sol = solve_milp(lp)
    return np.round(sol.x)


def plan_cooptimized(inst: Instance, forecast: Forecast):
    """Joint proactive/reactive plan against the point forecast.

    The product (1-x)(1-y) is linearized with one z variable per region
    (z >= 1 - x - y, z <= 1 - x, z <= 1 - y, z in [0, 1]); the linearization
    is exact at binary x, y.
    """
    n = inst.n
    nv = 3 * n  # [x, y, z]
    obj = np.zeros(nv)
    obj[2 * n :] = inst.h * forecast.u_hat
    rows = []
    bx = np.zeros(nv)
    bx[:n] = inst.b
    rows.append((bx, LE, inst.B))
    cy = np.zeros(nv)
    cy[n : 2 * n] = inst.c
    rows.append((cy, LE, inst.C))
    for i in range(n):
        low = np.zeros(nv)
        low[i] = -1.0
        low[n + i] = -1.0
        low[2 * n + i] = -1.0
        rows.append((low, LE, -1.0))  # z_i >= 1 - x_i - y_i
        ux = np.zeros(nv)
        ux[i] = 1.0
        ux[2 * n + i] = 1.0
        rows.append((ux, LE, 1.0))  # z_i <= 1 - x_i
        uy = np.zeros(nv)
        uy[n + i] = 1.0
        uy[2 * n + i] = 1.0
        rows.append((uy, LE, 1.0))  # z_i <= 1 - y_i
    bounds = np.column_stack([np.zeros(nv), np.ones(nv)])
    mask = np.concatenate([np.ones(2 * n, dtype=bool), np.zeros(n, dtype=bool)])
    lp = LinearProgram("min", obj, rows, var_bounds=bounds, integrality=mask)
    sol = solve_milp(lp)
    x = np.round(sol.x[:n])
    y = np.round(sol.x[n : 2 * n])
    return x, y


def evaluate_recourse(inst: Instance, x_bar, y_bar, u_bar) -> float:
    """Realized cost of fixed actions under one outage scenario.

    Pass ``y_bar=None`` to re-derive the budget-optimal reactive response
    for the realized scenario (the planner acts after seeing it); a fixed
    vector evaluates exactly as given.
    """
    x_bar = np.asarray(x_bar, dtype=float)
    u_bar = np.asarray(u_bar, dtype=float)
    if y_bar is None:
        zeta = inst.h * u_bar * (1.0 - x_bar)
        y_bar, _ = recourse_binary(zeta, inst.c, inst.C)
    y_bar = np.asarray(y_bar, dtype=float)
    return float(np.sum(inst.h * u_bar * (1.0 - x_bar) * (1.0 - y_bar)))


@dataclass
class BenchConfig:
    """Everything needed to reproduce one benchmark run."""

    n: int = 10
    seed: int = 0
    n_samples: int = 200
    n_eval: int = 40
    alpha: float = 0.1
    train_fraction: float = 0.9
    proactive_budget: float = 1000.0
    reactive_budget: float = 1.0
    b_low: float = 100.0
    b_high: float = 1000.0
    h_scale: float = 1.0
    chi: float = 0.1
    epsilon: float = 1e-6
    epsilon_rel: float = 0.0
    max_iter: int = 200
    cut_mode: str = "both"
    trilevel_recourse: str = "reoptimize"  # or "fixed"


def build_case(config: BenchConfig):
    """Instance plus simulator configuration for one seeded case.

    Proactive costs are uniform in [b_low, b_high], reactive costs are one,
    and the per-unit outage cost is h_scale times the region population.
    """
    sir = default_config(config.n, seed=config.seed, chi=config.chi)
    rng = np.random.default_rng(np.random.SeedSequence((int(config.seed), 2)))
    b = rng.uniform(config.b_low, config.b_high, size=config.n)
    inst = Instance(
        n=config.n,
        b=b,
        c=np.ones(config.n),
        h=config.h_scale * np.asarray(sir.nu, dtype=float),
        B=config.proactive_budget,
        C=config.reactive_budget,
    )
    return inst, sir


@dataclass
class BenchReport:
    """Long-form benchmark cells plus per-cell means and solver timings."""

    config: BenchConfig
    raw: list = field(default_factory=list)  # (planner, forecast, criterion, variant, sample, value)
    timings: list = field(default_factory=list)  # (sample, wall_clock, gap, iterations)

    def summary(self):
        """Mean value per (planner, forecast, criterion, variant), insertion order."""
        order = []
        acc = {}
        for planner, forecast, criterion, variant, _sample, value in self.raw:
            key = (planner, forecast, criterion, variant)
            if key not in acc:
                acc[key] = []
                order.append(key)
            acc[key].append(value)
        return [
            (k[0], k[1], k[2], k[3], float(np.mean(acc[k])), len(acc[k])) for k in order
        ]

    def cells_csv(self) -> str:
        buf = io.StringIO()
        buf.write("planner,forecast,criterion,variant,sample_id,value\n")
        for planner, forecast, criterion, variant, sample, value in self.raw:
            buf.write(f"{planner},{forecast},{criterion},{variant},{sample},{float(value)!r}\n")
        return buf.getvalue()

    def summary_csv(self) -> str:
        buf = io.StringIO()
        buf.write("planner,forecast,criterion,variant,mean_value,n_samples\n")
        for planner, forecast, criterion, variant, mean, count in self.summary():
            buf.write(f"{planner},{forecast},{criterion},{variant},{float(mean)!r},{count}\n")
        return buf.getvalue()

    def table_csv(self, criterion: str) -> str:
        """Pivoted summary, one planner/forecast row per line."""
        variants = WORST_CASE_VARIANTS if criterion == CRITERION_WORST_CASE else RECOURSE_VARIANTS
        cells = {}
        order = []
        for planner, forecast, crit, variant, mean, _count in self.summary():
            if crit != criterion:
                continue
            key = (planner, forecast)
            if key not in cells:
                cells[key] = {}
                order.append(key)
            cells[key][variant] = mean
        buf = io.StringIO()
        buf.write("planner,forecast," + ",".join(variants) + "\n")
        for key in order:
            vals = ",".join(repr(float(cells[key][v])) for v in variants)
            buf.write(f"{key[0]},{key[1]},{vals}\n")
        return buf.getvalue()

    def timings_csv(self) -> str:
        buf = io.StringIO()
        buf.write("sample_id,wall_clock_s,final_gap,iterations\n")
        for sample, wall, gap, iters in self.timings:
            buf.write(f"{sample},{float(wall)!r},{float(gap)!r},{iters}\n")
        return buf.getvalue()


def calibrate(data: ObservationSet, config: BenchConfig):
    """Split, fit, and score the historical observations."""
    train, cal = split_observations(data, config.train_fraction, config.seed)
    model = fit_regressor(train)
    scores = nonconformity_scores(model, cal)
    return train, cal, model, scores


def run_benchmark(config: BenchConfig) -> BenchReport:
    """Full protocol: simulate, calibrate, plan, and score all planners.

    Per held-out evaluation sample, the uncertainty set is rebuilt from that
    sample's features; the worst-case planner replans against it while the
    deterministic planners keep their forecast-based actions (only the
    conformal-conservative forecast varies with the sample). When all four
    proactive-only plans coincide on every sample they are reported once
    under the forecast label ``all``.
    """
    from .conformal import build_uncertainty_set

    inst, sir = build_case(config)
    data = generate_dataset(sir, config.n_samples)
    n_hist = config.n_samples - config.n_eval
    if n_hist < 4:
        raise CalibrationError("not enough samples left for history after the eval split")
    hist = data.subset(range(n_hist))
    evalset = data.subset(range(n_hist, config.n_samples))
    train, _cal, model, scores = calibrate(hist, config)

    eta = hist.U.mean(axis=0)
    sigma = hist.U.std(axis=0, ddof=1)
    scenario = {
        "eta": eta,
        "eta_plus_sigma": eta + sigma,
        "eta_plus_2sigma": eta + 2.0 * sigma,
    }
    static_forecasts = {
        FORECAST_EMPIRICAL_AVERAGE: make_forecast(FORECAST_EMPIRICAL_AVERAGE, data=hist),
        FORECAST_EMPIRICAL_CONSERVATIVE: make_forecast(
            FORECAST_EMPIRICAL_CONSERVATIVE, data=hist
        ),
        FORECAST_CONFORMAL_AVERAGE: make_forecast(
            FORECAST_CONFORMAL_AVERAGE, data=train, model=model
        ),
    }

    plan_cache = {}

    def cached_plans(forecast: Forecast):
        key = (forecast.method, forecast.u_hat.tobytes())
        if key not in plan_cache:
            x_pro = plan_proactive_only(inst, forecast)
            x_co, y_co = plan_cooptimized(inst, forecast)
            plan_cache[key] = (x_pro, x_co, y_co)
        return plan_cache[key]

    report = BenchReport(config=config)
    pro_rows = []  # deferred to allow collapsing identical actions
    pro_actions_equal = True

    for j in range(config.n_eval):
        omega_j = build_uncertainty_set(model, scores, config.alpha, evalset.W[j])
        forecasts = dict(static_forecasts)
        forecasts[FORECAST_CONFORMAL_CONSERVATIVE] = make_forecast(
            FORECAST_CONFORMAL_CONSERVATIVE, omega=omega_j
        )

        t0 = time.perf_counter()
        plan = benders_solve(
            inst,
            omega_j,
            epsilon=config.epsilon,
            max_iter=config.max_iter,
            cut_mode=config.cut_mode,
            epsilon_rel=config.epsilon_rel,
        )
        report.timings.append(
            (j, time.perf_counter() - t0, plan.final_gap, plan.iterations)
        )

        plans = {m: cached_plans(f) for m, f in forecasts.items()}
        pro_x = {m: plans[m][0] for m in FORECAST_METHODS}
        if any(not np.array_equal(pro_x[m], pro_x[FORECAST_EMPIRICAL_AVERAGE]) for m in FORECAST_METHODS):
            pro_actions_equal = False

        value_memo = {}

        def scored(x, variant):
            key = (x.tobytes(), variant)
            if key not in value_memo:
                value_memo[key] = worst_case_value(x, omega_j, inst, variant=variant)
            return value_memo[key]

        for variant in WORST_CASE_VARIANTS:
            for method in FORECAST_METHODS:
                pro_rows.append(
                    (method, CRITERION_WORST_CASE, variant, j, scored(pro_x[method], variant))
                )
            for method in FORECAST_METHODS:
                x_co = plans[method][1]
                report.raw.append(
                    (PLANNER_COOPT, method, CRITERION_WORST_CASE, variant, j, scored(x_co, variant))
                )
            report.raw.append(
                (PLANNER_TRILEVEL, "-", CRITERION_WORST_CASE, variant, j, scored(plan.x, variant))
            )

        y_fixed = None
        if config.trilevel_recourse == "fixed":
            from .solver import subproblem

            sub = subproblem(plan.x, omega_j, inst)
            zeta = inst.h * sub.u * (1.0 - plan.x)
            y_fixed, _ = recourse_binary(zeta, inst.c, inst.C)
        for variant in RECOURSE_VARIANTS:
            u_bar = scenario[variant]
            for method in FORECAST_METHODS:
                x_co, y_co = plans[method][1], plans[method][2]
                report.raw.append(
                    (
                        PLANNER_COOPT,
                        method,
                        CRITERION_RECOURSE,
                        variant,
                        j,
                        evaluate_recourse(inst, x_co, y_co, u_bar),
                    )
                )
            report.raw.append(
                (
                    PLANNER_TRILEVEL,
                    "-",
                    CRITERION_RECOURSE,
                    variant,
                    j,
                    evaluate_recourse(inst, plan.x, y_fixed, u_bar),
                )
            )

    # Proactive-only rows: one label when all four forecasts agree on the
    # actions (their scored values then coincide), else one row per forecast.
    if pro_actions_equal:
        seen = set()
        for method, criterion, variant, j, value in pro_rows:
            if (variant, j) in seen:
                continue
            seen.add((variant, j))
            report.raw.append((PLANNER_PROACTIVE, "all", criterion, variant, j, value))
    else:
        for method, criterion, variant, j, value in pro_rows:
            report.raw.append((PLANNER_PROACTIVE, method, criterion, variant, j, value))
    report.raw.sort(key=_row_order)
    return report


_PLANNER_ORDER = {PLANNER_PROACTIVE: 0, PLANNER_COOPT: 1, PLANNER_TRILEVEL: 2}
_FORECAST_ORDER = {m: k for k, m in enumerate(FORECAST_METHODS)}
_FORECAST_ORDER["all"] = -1
_FORECAST_ORDER["-"] = 9
_CRITERION_ORDER = {CRITERION_WORST_CASE: 0, CRITERION_RECOURSE: 1}
_VARIANT_ORDER = {v: k for k, v in enumerate(WORST_CASE_VARIANTS + RECOURSE_VARIANTS)}


def _row_order(row):
    planner, forecast, criterion, variant, sample, _value = row
    return (
        _CRITERION_ORDER[criterion],
        _PLANNER_ORDER[planner],
        _FORECAST_ORDER[forecast],
        _VARIANT_ORDER[variant],
        sample,
    )


@dataclass
class SweepReport:
    """Benchmark reports along one parameter grid plus planner differences."""

    parameter: str
    grid: list
    reports: list
    diffs: list = field(default_factory=list)  # (param_value, planner, forecast, variant, sample, diff)

    def diffs_csv(self) -> str:
        buf = io.StringIO()
        buf.write("param_value,planner,forecast,variant,sample_id,diff_vs_trilevel\n")
        for pv, planner, forecast, variant, sample, diff in self.diffs:
            buf.write(f"{float(pv)!r},{planner},{forecast},{variant},{sample},{float(diff)!r}\n")
        return buf.getvalue()

    def cells_csv(self) -> str:
        buf = io.StringIO()
        buf.write("param_value,planner,forecast,criterion,variant,sample_id,value\n")
        for pv, report in zip(self.grid, self.reports):
            for planner, forecast, criterion, variant, sample, value in report.raw:
                buf.write(
                    f"{float(pv)!r},{planner},{forecast},{criterion},{variant},{sample},{float(value)!r}\n"
                )
        return buf.getvalue()

    def timings_csv(self) -> str:
        buf = io.StringIO()
        buf.write("param_value,sample_id,wall_clock_s,final_gap,iterations\n")
        for pv, report in zip(self.grid, self.reports):
            for sample, wall, gap, iters in report.timings:
                buf.write(f"{float(pv)!r},{sample},{float(wall)!r},{float(gap)!r},{iters}\n")
        return buf.getvalue()


_SWEEP_FIELDS = {
    "chi": "chi",
    "n": "n",
    "B": "proactive_budget",
    "C": "reactive_budget",
}


def sensitivity_sweep(parameter: str, grid, config: BenchConfig) -> SweepReport:
    """Re-run the benchmark along one parameter grid.

    Emits, per grid point, the per-sample difference between each benchmark
    planner's worst-case value and the worst-case planner's (box-plot data)
    plus the solver wall-clock and final bound gap.
    """
    if parameter not in _SWEEP_FIELDS:
        raise ValueError(f"parameter must be one of {sorted(_SWEEP_FIELDS)}")
    field_name = _SWEEP_FIELDS[parameter]
    reports = []
    sweep = SweepReport(parameter=parameter, grid=list(grid), reports=reports)
    for value in grid:
        cfg = replace(config, **{field_name: int(value) if parameter == "n" else float(value)})
        report = run_benchmark(cfg)
        reports.append(report)
        tri = {}
        for planner, _forecast, criterion, variant, sample, val in report.raw:
            if planner == PLANNER_TRILEVEL and criterion == CRITERION_WORST_CASE:
                tri[(variant, sample)] = val
        for planner, forecast, criterion, variant, sample, val in report.raw:
            if planner == PLANNER_TRILEVEL or criterion != CRITERION_WORST_CASE:
                continue
            sweep.diffs.append(
                (value, planner, forecast, variant, sample, val - tri[(variant, sample)])
            )
    return sweep
