"""Worst-case planning solver.

Pieces, bottom up:

* ``recourse_lp`` / ``recourse_binary`` solve the inner protection problem
  min sum zeta_i (1 - y_i) over the reactive budget set, as a continuous LP
  with duals and as an exact binary program. For unit reactive costs and an
  integer budget with distinct nonzero weights the LP relaxation is integral
  (total unimodularity), so the two agree.
* ``subproblem`` folds the relaxed recourse into its dual and solves the
  joint maximization over (u, lambda, mu) as one LP: the certified cost of a
  fixed proactive vector under the worst admissible outage vector.
* ``benders_solve`` alternates a master mixed-binary program over x with the
  subproblem, accumulating optimality cuts until the bound sandwich closes.
* ``worst_case_value`` / ``enumerate_solve`` are the independent epigraph
  oracles used to validate everything above and to score planners.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionError, ResourceLimitError
from .lp import LE, GE, LinearProgram, solve_lp, solve_milp
from .model import Instance, UncertaintySet, uncertainty_variant

CUT_SUBGRADIENT = "subgradient"
CUT_NOGOOD = "nogood"
CUT_BOTH = "both"
CUT_MODES = (CUT_SUBGRADIENT, CUT_NOGOOD, CUT_BOTH)

STATUS_CONVERGED = "converged"
STATUS_ITERATION_LIMIT = "iteration_limit"

ENUMERATION_LIMIT = 100_000


@dataclass(frozen=True)
class RecourseSolution:
    """Continuous recourse optimum with budget and upper-bound duals."""

    y: np.ndarray
    value: float
    lam: float
    mu: np.ndarray

    def dual_value(self, zeta, C: float) -> float:
        """Dual objective C*lam + sum(mu) + sum(zeta); equals value at optimum."""
        return float(C * self.lam + np.sum(self.mu) + np.sum(zeta))


@dataclass(frozen=True)
class SubproblemSolution:
    """Worst-case outage vector and duals for a fixed proactive vector."""

    u: np.ndarray
    lam: float
    mu: np.ndarray
    phi: float


@dataclass
class PlanResult:
    """Outcome of a planning solve.

    ``trace`` holds one (iteration, phi_plus, phi_minus, x_t) tuple per
    iteration; phi_plus is non-increasing, phi_minus non-decreasing, and on
    convergence their gap is within the requested tolerance.
    """

    x: np.ndarray
    value: float
    trace: list = field(default_factory=list)
    iterations: int = 0
    status: str = STATUS_CONVERGED

    @property
    def final_gap(self) -> float:
        if not self.trace:
            return float("nan")
        return float(self.trace[-1][1] - self.trace[-1][2])

    def to_json(self) -> str:
        payload = {
            "x": [int(v) for v in np.round(self.x)],
            "value": self.value,
            "status": self.status,
            "iterations": self.iterations,
            "trace": [
                {
                    "iter": int(t),
                    "phi_plus": float(up),
                    "phi_minus": float(dn),
                    "x": [int(v) for v in np.round(xt)],
                }
                for (t, up, dn, xt) in self.trace
            ],
        }
        return json.dumps(payload, indent=2)

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(self.to_json())

    def trace_csv(self) -> str:
        lines = ["iter,phi_plus,phi_minus"]
        for (t, up, dn, _x) in self.trace:
            lines.append(f"{int(t)},{float(up)!r},{float(dn)!r}")
        return "\n".join(lines) + "\n"


def _check_vec(v, n, name):
    v = np.asarray(v, dtype=float)
    if v.shape != (n,):
        raise DimensionError(f"{name} must have shape ({n},), got {v.shape}")
    return v


def recourse_lp(zeta, c, C: float) -> RecourseSolution:
    """Continuous relaxation of the reactive protection problem.

    min sum zeta_i (1 - y_i) over 0 <= y <= 1, sum c_i y_i <= C. The budget
    row dual ``lam`` and the per-region upper-bound duals ``mu`` are both
    nonpositive; by strong duality value == C*lam + sum(mu) + sum(zeta).
    Always feasible (y = 0).
    """
    zeta = np.asarray(zeta, dtype=float)
    c = np.asarray(c, dtype=float)
    n = zeta.shape[0]
    if c.shape != (n,):
        raise DimensionError("zeta and c must have equal length")
    rows = [(c, LE, float(C))]
    eye = np.eye(n)
    for i in range(n):
        rows.append((eye[i], LE, 1.0))
    bounds = np.column_stack([np.zeros(n), np.full(n, np.inf)])
    lp = LinearProgram("min", -zeta, rows, var_bounds=bounds)
    sol = solve_lp(lp)
    value = float(np.sum(zeta) + sol.objective)
    return RecourseSolution(
        y=sol.x,
        value=value,
        lam=float(sol.row_duals[0]),
        mu=sol.row_duals[1:].copy(),
    )


def recourse_binary(zeta, c, C: float):
    """Exact binary recourse optimum (general costs) via branch and bound.

    Returns (y, value), the verification counterpart of ``recourse_lp``.
    """
    zeta = np.asarray(zeta, dtype=float)
    c = np.asarray(c, dtype=float)
    n = zeta.shape[0]
    if c.shape != (n,):
        raise DimensionError("zeta and c must have equal length")
    lp = LinearProgram(
        "min",
        -zeta,
        [(c, LE, float(C))],
        var_bounds=np.column_stack([np.zeros(n), np.ones(n)]),
        integrality=np.ones(n, dtype=bool),
    )
    sol = solve_milp(lp)
    y = np.round(sol.x)
    value = float(np.sum(zeta * (1.0 - y)))
    return y, value


def subproblem(x_bar, omega: UncertaintySet, inst: Instance) -> SubproblemSolution:
    """Worst-case cost of a fixed proactive vector with relaxed recourse.

    Solves, as a single LP over (u, lambda, mu),

        max sum_i [h_i u_i (1 - x_i) + mu_i] + C*lambda
        s.t. c_i*lambda + mu_i + h_i u_i (1 - x_i) <= 0 for all i,
             lambda <= 0, mu <= 0, u inside the uncertainty polyhedron.

    Feasible for any x (u can be any point of the set, lambda and mu pushed
    down), and the optimum is the max-min value with continuous recourse.
    """
    n = inst.n
    x_bar = _check_vec(x_bar, n, "x_bar")
    if omega.n != n:
        raise DimensionError("uncertainty set size does not match the instance")
    w = inst.h * (1.0 - x_bar)  # exposed per-unit cost
    nv = 2 * n + 1  # [u_1..u_n, lambda, mu_1..mu_n]
    obj = np.concatenate([w, [inst.C], np.ones(n)])
    rows = []
    for i in range(n):
        a = np.zeros(nv)
        a[i] = w[i]
        a[n] = inst.c[i]
        a[n + 1 + i] = 1.0
        rows.append((a, LE, 0.0))
    ones_u = np.zeros(nv)
    ones_u[:n] = 1.0
    rows.append((ones_u, LE, omega.global_upper))
    rows.append((ones_u, GE, omega.global_lower))
    lo = np.concatenate([omega.local_lower, [-np.inf], np.full(n, -np.inf)])
    hi = np.concatenate([omega.local_upper, [0.0], np.zeros(n)])
    lp = LinearProgram("max", obj, rows, var_bounds=np.column_stack([lo, hi]))
    sol = solve_lp(lp)
    if sol.status != "optimal":
        raise ValueError(f"subproblem not solvable: status {sol.status}")
    return SubproblemSolution(
        u=sol.x[:n].copy(),
        lam=float(sol.x[n]),
        mu=sol.x[n + 1 :].copy(),
        phi=float(sol.objective),
    )


def subgradient(sub: SubproblemSolution, x_bar, inst: Instance) -> np.ndarray:
    """Slope vector of a valid linear under-estimator of the worst-case cost.

    phi_i = -min(h_i u_i^*, Phi) (1 - x_bar_i): protecting a currently
    exposed region i removes at most h_i u_i^* from the worst case (the
    optimal duals stay feasible after the flip), never more than the whole
    worst case, and removing protection is never credited. The cut
    value(x) = Phi(x_bar) + phi . (x - x_bar) therefore never exceeds the
    true worst-case cost anywhere on the hypercube and is tight at x_bar:
    with one slope capped the remaining value is already nonpositive, and
    uncapped slopes follow the dual-feasibility argument.
    """
    x_bar = _check_vec(x_bar, inst.n, "x_bar")
    return -np.minimum(inst.h * sub.u, sub.phi) * (1.0 - x_bar)


def budget_feasible_binaries(costs, budget: float, limit: int = ENUMERATION_LIMIT):
    """All 0/1 vectors y with costs . y <= budget, in lexicographic order.

    Depth-first with cost pruning, so only feasible prefixes are visited.
    Raises ResourceLimitError past ``limit`` vectors.
    """
    costs = np.asarray(costs, dtype=float)
    n = costs.shape[0]
    out = []
    current = np.zeros(n)

    def rec(i, spent):
        if len(out) > limit:
            raise ResourceLimitError(
                f"budget-feasible enumeration exceeded {limit} vectors; "
                "use the dualized subproblem instead"
            )
        if i == n:
            out.append(current.copy())
            return
        rec(i + 1, spent)
        if spent + costs[i] <= budget:
            current[i] = 1.0
            rec(i + 1, spent + costs[i])
            current[i] = 0.0

    rec(0, 0.0)
    if len(out) > limit:
        raise ResourceLimitError(
            f"budget-feasible enumeration exceeded {limit} vectors; "
            "use the dualized subproblem instead"
        )
    return out


def worst_case_value(
    x_bar,
    omega: UncertaintySet,
    inst: Instance,
    variant: str = "full",
    limit: int = ENUMERATION_LIMIT,
) -> float:
    """Exact max-min value by the epigraph oracle, free of any dualization.

    Enumerates every budget-feasible binary recourse vector y and solves

        max t  s.t.  t <= sum_i h_i u_i (1 - x_i)(1 - y_i) for every y,
                     u inside the selected uncertainty variant.

    The binary recourse here makes this the reference value against which
    the dualized ``subproblem`` is validated.
    """
    n = inst.n
    x_bar = _check_vec(x_bar, n, "x_bar")
    om = uncertainty_variant(omega, variant)
    ys = budget_feasible_binaries(inst.c, inst.C, limit=limit)
    w = inst.h * (1.0 - x_bar)
    nv = n + 1  # [u, t]
    obj = np.zeros(nv)
    obj[n] = 1.0
    rows = []
    for y in ys:
        a = np.zeros(nv)
        a[:n] = -w * (1.0 - y)
        a[n] = 1.0
        rows.append((a, LE, 0.0))
    ones_u = np.zeros(nv)
    ones_u[:n] = 1.0
    rows.append((ones_u, LE, om.global_upper))
    rows.append((ones_u, GE, om.global_lower))
    lo = np.concatenate([om.local_lower, [0.0]])
    hi = np.concatenate([om.local_upper, [np.inf]])
    lp = LinearProgram("max", obj, rows, var_bounds=np.column_stack([lo, hi]))
    sol = solve_lp(lp)
    if sol.status != "optimal":
        raise ValueError(f"epigraph oracle failed: status {sol.status}")
    return float(sol.objective)


def benders_solve(
    inst: Instance,
    omega: UncertaintySet,
    epsilon: float = 1e-6,
    max_iter: int = 200,
    cut_mode: str = CUT_BOTH,
    epsilon_rel: float = 0.0,
) -> PlanResult:
    """Plan proactive actions by master/subproblem decomposition.

    The master minimizes an epigraph variable theta over the proactive
    budget set plus accumulated cuts (theta >= 0 keeps iteration one
    well-posed). Each iteration prices the master's candidate with the
    worst-case subproblem and adds, per ``cut_mode``:

    * a subgradient cut  theta >= Phi(x_t) + phi . (x - x_t), and/or
    * a no-good cut      theta >= Phi(x_t) * (1 - sum_{i: x_t_i = 0} x_i),

    both valid because the worst-case cost is nonnegative and can only fall
    as more regions are protected. No-good cuts alone already force finite
    exact convergence over the binary hypercube; subgradient cuts speed it
    up. The returned plan is the incumbent with the best certified value.

    Convergence is declared when the bound gap drops to
    max(epsilon, epsilon_rel * |best|, 1e-9 * max(1, |best|)); the last term
    lets epsilon = 0 terminate despite floating-point noise.

    With unit reactive costs and an integer reactive budget the continuous
    recourse inside the subproblem is exact, so the certified value equals
    the true binary-recourse optimum.
    """
    if cut_mode not in CUT_MODES:
        raise ValueError(f"cut_mode must be one of {CUT_MODES}")
    if epsilon < 0:
        raise ValueError("epsilon must be nonnegative")
    if max_iter < 1:
        raise ValueError("max_iter must be at least 1")
    n = inst.n
    nv = n + 1  # [x, theta]
    obj = np.zeros(nv)
    obj[n] = 1.0
    budget_row = np.zeros(nv)
    budget_row[:n] = inst.b
    base_rows = [(budget_row, LE, inst.B)]
    bounds = np.column_stack(
        [np.zeros(nv), np.concatenate([np.ones(n), [np.inf]])]
    )
    mask = np.concatenate([np.ones(n, dtype=bool), [False]])

    cuts = []
    cut_keys = set()  # revisited candidates would re-add identical rows

    def add_cut(coeffs, rhs):
        key = (coeffs.tobytes(), float(rhs))
        if key not in cut_keys:
            cut_keys.add(key)
            cuts.append((coeffs, GE, rhs))

    trace = []
    phi_plus = np.inf
    phi_minus = -np.inf
    best_x = None
    status = STATUS_ITERATION_LIMIT
    it = 0
    while it < max_iter:
        master = LinearProgram(
            "min", obj, base_rows + cuts, var_bounds=bounds, integrality=mask
        )
        msol = solve_milp(master)
        if msol.status != "optimal":
            raise ValueError(f"master problem is {msol.status}; check budgets")
        theta_t = float(msol.objective)
        x_t = np.round(msol.x[:n])
        phi_minus = max(phi_minus, theta_t)

        sub = subproblem(x_t, omega, inst)
        if sub.phi < phi_plus:
            phi_plus = sub.phi
            best_x = x_t
        trace.append((it, phi_plus, phi_minus, x_t.copy()))
        it += 1

        threshold = max(epsilon, epsilon_rel * abs(phi_plus), 1e-9 * max(1.0, abs(phi_plus)))
        if phi_plus - phi_minus <= threshold:
            status = STATUS_CONVERGED
            break

        if cut_mode in (CUT_SUBGRADIENT, CUT_BOTH):
            phi_vec = subgradient(sub, x_t, inst)
            a = np.zeros(nv)
            a[:n] = -phi_vec
            a[n] = 1.0
            add_cut(a, sub.phi - float(phi_vec @ x_t))
        if cut_mode in (CUT_NOGOOD, CUT_BOTH):
            a = np.zeros(nv)
            a[:n] = sub.phi * (1.0 - x_t)
            a[n] = 1.0
            add_cut(a, sub.phi)

    return PlanResult(
        x=best_x,
        value=float(phi_plus),
        trace=trace,
        iterations=it,
        status=status,
    )


def enumerate_solve(
    inst: Instance, omega: UncertaintySet, variant: str = "full"
) -> PlanResult:
    """Exhaustive oracle: score every budget-feasible x with the epigraph LP.

    Guarded at n <= 20. Ties go to the lexicographically smallest x.
    """
    n = inst.n
    if n > 20:
        raise ResourceLimitError(f"enumerate_solve is limited to n <= 20, got n={n}")
    best_x = None
    best_val = np.inf
    count = 0
    for x in budget_feasible_binaries(inst.b, inst.B, limit=2**n + 1):
        val = worst_case_value(x, omega, inst, variant=variant)
        count += 1
        if val < best_val:
            best_val = val
            best_x = x
    return PlanResult(
        x=best_x,
        value=float(best_val),
        trace=[],
        iterations=count,
        status=STATUS_CONVERGED,
    )
