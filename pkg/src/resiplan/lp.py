"""Self-contained dense LP/MILP kernel.

``solve_lp`` runs a two-phase bounded-variable primal simplex on a dense
tableau (lowest-index entering rule, Harris two-pass ratio test, periodic
exact refactorization) and reports certified optima: primal feasibility,
dual feasibility, and a strong-duality gap within
``1e-8 * (1 + |objective|)``. ``solve_milp`` wraps it in a deterministic
best-first branch and bound for mixed-binary programs. Instances here stay
small (a few hundred variables), so the dense representation is the right
trade.

A solve call owns its workspace; concurrent solves on distinct programs are
safe.
"""

from __future__ import annotations

import heapq
from dataclasses import dataclass

import numpy as np

from . import _simplex
from ._simplex import AT_LOWER, AT_UPPER, BASIC, FREE
from .errors import DimensionError, NumericalError, ResourceLimitError

MAX_PIVOTS = 100_000
MAX_NODES = 1_000_000
DUAL_TOL = 1e-9
PIVOT_TOL = 1e-9
STABILITY_TOL = 1e-7
BURST_PIVOTS = 40
FEAS_TOL = 1e-8
INTEGRALITY_TOL = 1e-6

LE = "<="
EQ = "=="
GE = ">="
_RELATIONS = (LE, EQ, GE)

STATUS_OPTIMAL = "optimal"
STATUS_INFEASIBLE = "infeasible"
STATUS_UNBOUNDED = "unbounded"


@dataclass
class LinearProgram:
    """A dense LP/MILP in row form.

    ``rows`` is a list of ``(coefficients, relation, rhs)`` with relation one
    of ``"<="``, ``"=="``, ``">="``. ``var_bounds`` is an (n, 2) array of
    per-variable [lower, upper] with +-inf allowed; the default box is
    [0, +inf). ``integrality`` marks binary variables (bounds within [0, 1]).
    """

    sense: str
    objective: np.ndarray
    rows: list
    var_bounds: np.ndarray = None
    integrality: np.ndarray = None

    def __post_init__(self):
        if self.sense not in ("min", "max"):
            raise ValueError(f"sense must be 'min' or 'max', got {self.sense!r}")
        self.objective = np.asarray(self.objective, dtype=float)
        if self.objective.ndim != 1:
            raise DimensionError("objective must be a vector")
        n = self.objective.shape[0]
        parsed = []
        for k, (coeffs, rel, rhs) in enumerate(self.rows):
            coeffs = np.asarray(coeffs, dtype=float)
            if coeffs.shape != (n,):
                raise DimensionError(f"row {k} has shape {coeffs.shape}, expected ({n},)")
            if rel not in _RELATIONS:
                raise ValueError(f"row {k} relation {rel!r} not one of {_RELATIONS}")
            parsed.append((coeffs, rel, float(rhs)))
        self.rows = parsed
        if self.var_bounds is None:
            vb = np.empty((n, 2))
            vb[:, 0] = 0.0
            vb[:, 1] = np.inf
            self.var_bounds = vb
        else:
            self.var_bounds = np.asarray(self.var_bounds, dtype=float)
            if self.var_bounds.shape != (n, 2):
                raise DimensionError(f"var_bounds must have shape ({n}, 2)")
            if np.any(self.var_bounds[:, 0] > self.var_bounds[:, 1]):
                raise ValueError("some variable has lower bound above its upper bound")
        if self.integrality is None:
            self.integrality = np.zeros(n, dtype=bool)
        else:
            self.integrality = np.asarray(self.integrality, dtype=bool)
            if self.integrality.shape != (n,):
                raise DimensionError(f"integrality mask must have shape ({n},)")

    @property
    def n_vars(self) -> int:
        return self.objective.shape[0]

    @property
    def n_rows(self) -> int:
        return len(self.rows)


@dataclass
class LpSolution:
    """Result of an LP or MILP solve.

    For an optimal LP, ``row_duals`` and ``reduced_costs`` satisfy
    complementary slackness and ``dual_objective`` matches ``objective``
    within the certified gap. Sign convention: for a minimization, the dual
    of a ``<=`` row is nonpositive and of a ``>=`` row nonnegative; both flip
    for a maximization. ``basis`` lists basic column indices (0..n-1 are the
    structural variables, n..n+m-1 the row slacks). For MILP results
    ``nodes`` counts LP relaxations solved and the dual fields are None.
    """

    status: str
    x: np.ndarray = None
    objective: float = np.nan
    row_duals: np.ndarray = None
    reduced_costs: np.ndarray = None
    basis: np.ndarray = None
    dual_objective: float = np.nan
    ray: np.ndarray = None
    nodes: int = 0


def _standard_form(lp: LinearProgram):
    """Return (c_min, A, b, rel_codes, lo, hi, flip) with min sense."""
    n = lp.n_vars
    m = lp.n_rows
    A = np.zeros((m, n))
    b = np.zeros(m)
    rels = []
    for k, (coeffs, rel, rhs) in enumerate(lp.rows):
        A[k] = coeffs
        b[k] = rhs
        rels.append(rel)
    lo = lp.var_bounds[:, 0].copy()
    hi = lp.var_bounds[:, 1].copy()
    if lp.sense == "max":
        return -lp.objective.copy(), A, b, rels, lo, hi, -1.0
    return lp.objective.copy(), A, b, rels, lo, hi, 1.0


def _initial_point(lo, hi):
    """Nonbasic starting values and states: finite bound nearest the origin."""
    n = lo.shape[0]
    vals = np.zeros(n)
    stat = np.full(n, FREE, dtype=np.int64)
    for j in range(n):
        if np.isfinite(lo[j]):
            vals[j] = lo[j]
            stat[j] = AT_LOWER
        elif np.isfinite(hi[j]):
            vals[j] = hi[j]
            stat[j] = AT_UPPER
    return vals, stat


def _nonbasic_values(lo, hi, vstat):
    """Vector of current nonbasic variable values (basic entries are 0)."""
    vals = np.where(vstat == AT_LOWER, lo, 0.0)
    vals = np.where(vstat == AT_UPPER, hi, vals)
    return vals


class _SingularBasis(Exception):
    """Internal: the kernel pivoted onto numerical junk; restart the solve."""


def _refactor(Ms, b_s, cvec, lo, hi, basis, vstat):
    """Rebuild tableau, basic values, and reduced costs exactly from the basis."""
    B = Ms[:, basis]
    xN = _nonbasic_values(lo, hi, vstat)
    rhs = b_s - Ms @ xN
    try:
        xB = np.linalg.solve(B, rhs)
        T = np.linalg.solve(B, Ms)
    except np.linalg.LinAlgError as exc:
        raise _SingularBasis(str(exc)) from exc
    if not np.all(np.isfinite(xB)):
        raise _SingularBasis("non-finite basic values after refactorization")
    cred = cvec - cvec[basis] @ T
    cred[basis] = 0.0
    return T, xB, cred


def _run_phase(Ms, b_s, cvec, lo, hi, basis, vstat, T, xB, cred, burst, stab_tol, scan_start=0):
    """Drive the pivot kernel with periodic exact refactorization.

    Drift is bounded by rebuilding the tableau exactly from the basis every
    ``burst`` pivots and whenever the kernel meets an unstable pivot. An
    OPTIMAL or UNBOUNDED verdict reached within one burst of an exact state
    is accepted directly (the post-solve recomputes values and duals from
    the basis anyway); verdicts reached later are re-checked after a
    rebuild. Returns (status, T, xB, cred, aux).
    """
    m = Ms.shape[0]
    if m == 0:
        status, _, aux = _simplex.pivot_phase(
            T, xB, cred, lo, hi, basis, vstat, MAX_PIVOTS, DUAL_TOL, PIVOT_TOL,
            stab_tol, 1, scan_start,
        )
        return status, T, xB, cred, aux
    total = 0
    since_fresh = 0  # pivots executed since the state was exactly rebuilt
    while True:
        status, pivots, aux = _simplex.pivot_phase(
            T, xB, cred, lo, hi, basis, vstat, burst, DUAL_TOL, PIVOT_TOL,
            stab_tol, 1, scan_start,
        )
        total += pivots
        since_fresh += pivots
        if total > MAX_PIVOTS:
            raise NumericalError(f"simplex stalled after {total} pivots")
        if status in (_simplex.KERNEL_OPTIMAL, _simplex.KERNEL_UNBOUNDED):
            if since_fresh <= burst:
                return status, T, xB, cred, aux
            # Re-derive the state exactly and double-check the verdict.
            T, xB, cred = _refactor(Ms, b_s, cvec, lo, hi, basis, vstat)
            since_fresh = 0
            continue
        # KERNEL_REFACTOR or burst exhausted: rebuild and keep going.
        T, xB, cred = _refactor(Ms, b_s, cvec, lo, hi, basis, vstat)
        since_fresh = 0


def _solve_core(c_min, A, b, rels, lo_s, hi_s):
    """Two-phase simplex on min c.x s.t. A x rel b, lo <= x <= hi.

    Returns a dict with status and, when optimal, the certified solution
    pieces in the internal min sense. A rare pivot onto numerical junk can
    leave a singular basis; in that case the whole solve restarts once with
    short bursts and a coarse pivot-stability threshold.
    """
    try:
        return _solve_core_attempt(c_min, A, b, rels, lo_s, hi_s, BURST_PIVOTS, STABILITY_TOL)
    except _SingularBasis:
        try:
            return _solve_core_attempt(c_min, A, b, rels, lo_s, hi_s, 10, 1e-5)
        except _SingularBasis as exc:
            raise NumericalError(f"singular basis persisted across restart: {exc}") from exc


def _solve_core_attempt(c_min, A, b, rels, lo_s, hi_s, burst, stab_tol):
    m, n = A.shape
    n_real = n + m

    # Row equilibration: cut rows can carry coefficients many orders larger
    # than budget rows, which would defeat absolute pivot tolerances. The
    # duals of the equilibrated rows are rescaled on the way out.
    if m:
        row_scale = np.abs(A).max(axis=1)
        row_scale[row_scale < 1e-12] = 1.0
        A = A / row_scale.reshape(m, 1)
        b = b / row_scale
    else:
        row_scale = np.ones(0)

    slack_lo = np.zeros(m)
    slack_hi = np.zeros(m)
    for k, rel in enumerate(rels):
        if rel == LE:
            slack_lo[k] = 0.0
            slack_hi[k] = np.inf
        elif rel == GE:
            slack_lo[k] = -np.inf
            slack_hi[k] = 0.0
        else:
            slack_lo[k] = 0.0
            slack_hi[k] = 0.0

    lo = np.concatenate([lo_s, slack_lo, np.zeros(m)])
    hi = np.concatenate([hi_s, slack_hi, np.full(m, np.inf)])

    v0, stat0 = _initial_point(lo_s, hi_s)
    resid = b - A @ v0  # slacks start at 0
    sign = np.where(resid >= 0.0, 1.0, -1.0)

    # Scaled column map: artificial columns form the identity, so rows are
    # premultiplied by their sign. All kernel work and refactorization use
    # this matrix together with the scaled right-hand side.
    Ms = np.zeros((m, n_real + m))
    Ms[:, :n] = A * sign.reshape(m, 1) if m else A
    Ms[:, n : n + m] = np.diag(sign)
    Ms[:, n_real :] = np.eye(m)
    b_s = b * sign

    T = Ms.copy()
    xB = np.abs(resid)
    basis = np.arange(n_real, n_real + m, dtype=np.int64)
    vstat = np.empty(n_real + m, dtype=np.int64)
    vstat[:n] = stat0
    for k, rel in enumerate(rels):
        vstat[n + k] = AT_UPPER if rel == GE else AT_LOWER
    vstat[n_real:] = BASIC

    scale = 1.0 + (np.max(np.abs(b)) if m else 0.0)

    # Phase 1: minimize the artificial total.
    c1 = np.zeros(n_real + m)
    c1[n_real:] = 1.0
    cred = c1 - T.sum(axis=0)
    cred[basis] = 0.0
    status, T, xB, cred, _ = _run_phase(Ms, b_s, c1, lo, hi, basis, vstat, T, xB, cred, burst, stab_tol, scan_start=n)
    if status == _simplex.KERNEL_UNBOUNDED:
        raise NumericalError("phase 1 reported unbounded; artificial objective is bounded")
    infeas = 0.0
    for r in range(m):
        if basis[r] >= n_real:
            infeas += max(xB[r], 0.0)
    if infeas > FEAS_TOL * scale:
        return {"status": STATUS_INFEASIBLE}

    # Phase 2: original costs, artificials pinned at zero. The tableau from
    # phase 1 stays valid; only the reduced costs change basis.
    lo[n_real:] = 0.0
    hi[n_real:] = 0.0
    art_view = vstat[n_real:]
    art_view[art_view != BASIC] = AT_LOWER
    c2 = np.zeros(n_real + m)
    c2[:n] = c_min
    if m:
        cred = c2 - c2[basis] @ T
        cred[basis] = 0.0
    else:
        cred = c2.copy()
    status, T, xB, cred, enter = _run_phase(Ms, b_s, c2, lo, hi, basis, vstat, T, xB, cred, burst, stab_tol)
    if status == _simplex.KERNEL_UNBOUNDED:
        ray = np.zeros(n_real + m)
        sgn = -1.0 if cred[enter] > 0 else 1.0
        ray[enter] = sgn
        ray[basis] = -sgn * T[:, enter]
        return {"status": STATUS_UNBOUNDED, "ray": ray[:n]}

    # Recompute basic values and duals exactly from the final basis (the
    # kernel's xB may carry one burst of drift). Harris steps allow a 1e-7
    # feasibility slack, so clip the residue into the bounds; branching must
    # never see out-of-range values.
    x_full = _nonbasic_values(lo, hi, vstat)
    if m:
        Bs = Ms[:, basis]
        try:
            xB_exact = np.linalg.solve(Bs, b_s - Ms @ x_full)
            y = sign * np.linalg.solve(Bs.T, c2[basis])
        except np.linalg.LinAlgError as exc:
            raise _SingularBasis(str(exc)) from exc
        x_full[basis] = np.clip(xB_exact, lo[basis], hi[basis])
    else:
        y = np.zeros(0)

    if m:
        M0 = Ms * sign.reshape(m, 1)  # unscaled columns for dual pricing
        d_full = c2 - M0.T @ y
    else:
        d_full = c2.copy()
    bound_terms = 0.0
    for j in range(n_real + m):
        s = vstat[j]
        if s == AT_LOWER and np.isfinite(lo[j]) and lo[j] != 0.0:
            bound_terms += d_full[j] * lo[j]
        elif s == AT_UPPER and np.isfinite(hi[j]) and hi[j] != 0.0:
            bound_terms += d_full[j] * hi[j]
    dual_obj = float(y @ b + bound_terms) if m else float(bound_terms)

    return {
        "status": STATUS_OPTIMAL,
        "x": x_full[:n],
        "x_full": x_full,
        "objective": float(c_min @ x_full[:n]),
        "y": y / row_scale if m else y,  # duals in original row units
        "d": d_full[:n],
        "dual_objective": dual_obj,
        "basis": basis.copy(),
        "lo": lo,
        "hi": hi,
        "vstat": vstat,
        "n_real": n_real,
    }


def _certify(core, A, b, rels, lo_s, hi_s):
    """Raise NumericalError if the optimal core result is not trustworthy."""
    x = core["x"]
    scale_b = 1.0 + (np.max(np.abs(b)) if len(b) else 0.0)
    tol = 1e-6 * scale_b
    if np.any(x < lo_s - tol) or np.any(x > hi_s + tol):
        raise NumericalError("solution violates variable bounds beyond tolerance")
    if len(b):
        act = A @ x
        for k, rel in enumerate(rels):
            if rel == LE and act[k] > b[k] + tol:
                raise NumericalError(f"row {k} violated: {act[k]} <= {b[k]}")
            if rel == GE and act[k] < b[k] - tol:
                raise NumericalError(f"row {k} violated: {act[k]} >= {b[k]}")
            if rel == EQ and abs(act[k] - b[k]) > tol:
                raise NumericalError(f"row {k} violated: {act[k]} == {b[k]}")
    gap = abs(core["objective"] - core["dual_objective"])
    if gap > 1e-6 * (1.0 + abs(core["objective"])):
        raise NumericalError(f"duality gap {gap} too large for a certified optimum")


def solve_lp(lp: LinearProgram) -> LpSolution:
    """Solve a pure LP to proven optimality, infeasibility, or unboundedness."""
    if np.any(lp.integrality):
        raise ValueError("solve_lp requires an all-false integrality mask; use solve_milp")
    c_min, A, b, rels, lo_s, hi_s, flip = _standard_form(lp)
    core = _solve_core(c_min, A, b, rels, lo_s, hi_s)
    if core["status"] == STATUS_INFEASIBLE:
        return LpSolution(status=STATUS_INFEASIBLE)
    if core["status"] == STATUS_UNBOUNDED:
        return LpSolution(status=STATUS_UNBOUNDED, ray=core["ray"])
    _certify(core, A, b, rels, lo_s, hi_s)
    return LpSolution(
        status=STATUS_OPTIMAL,
        x=core["x"],
        objective=flip * core["objective"],
        row_duals=flip * core["y"],
        reduced_costs=flip * core["d"],
        basis=core["basis"],
        dual_objective=flip * core["dual_objective"],
        nodes=0,
    )


def _solve_bounded(c_min, A, b, rels, lo_s, hi_s):
    """LP solve used inside branch and bound; returns the core dict."""
    if np.any(lo_s > hi_s):
        return {"status": STATUS_INFEASIBLE}
    return _solve_core(c_min, A, b, rels, lo_s, hi_s)


def solve_milp(lp: LinearProgram) -> LpSolution:
    """Globally optimal mixed-binary solve by best-first branch and bound.

    Branching is most-fractional with lowest-index ties; node order is
    (bound, insertion counter), so results are deterministic. Raises
    ResourceLimitError past 1e6 nodes, carrying the incumbent and bound.
    """
    mask = lp.integrality
    if not np.any(mask):
        return solve_lp(lp)
    if np.any(lp.var_bounds[mask, 0] < 0.0) or np.any(lp.var_bounds[mask, 1] > 1.0):
        raise ValueError("integrality mask may mark binary variables only (bounds in [0, 1])")

    c_min, A, b, rels, lo0, hi0, flip = _standard_form(lp)
    int_idx = np.where(mask)[0]

    heap = []
    counter = 0
    heapq.heappush(heap, (-np.inf, counter, lo0, hi0))
    incumbent = None
    inc_val = np.inf
    nodes = 0
    tried_heuristic = False

    while heap:
        bound, _, lo_s, hi_s = heapq.heappop(heap)
        # Relative slack: equal-value plateaus otherwise churn on float noise.
        prune_eps = 1e-9 + 1e-12 * abs(inc_val) if incumbent is not None else 0.0
        if incumbent is not None and bound >= inc_val - prune_eps:
            break
        core = _solve_bounded(c_min, A, b, rels, lo_s, hi_s)
        nodes += 1
        if nodes > MAX_NODES:
            raise ResourceLimitError(
                f"branch and bound exceeded {MAX_NODES} nodes",
                incumbent=None if incumbent is None else flip * inc_val,
                bound=flip * bound,
            )
        if core["status"] == STATUS_INFEASIBLE:
            continue
        if core["status"] == STATUS_UNBOUNDED:
            return LpSolution(status=STATUS_UNBOUNDED, ray=core["ray"], nodes=nodes)
        val = core["objective"]
        if val >= inc_val - prune_eps:
            continue
        x = core["x"]
        frac = np.abs(x[int_idx] - np.round(x[int_idx]))
        if np.all(frac <= INTEGRALITY_TOL):
            xr = x.copy()
            xr[int_idx] = np.round(xr[int_idx])
            incumbent = xr
            inc_val = float(c_min @ xr)
            continue
        if not tried_heuristic:
            # Floor-and-complete: fix the binaries at the rounded-down LP
            # values and re-optimize the continuous rest. One cheap LP that
            # usually seeds an incumbent and collapses equal-value plateaus.
            tried_heuristic = True
            lo_h, hi_h = lo_s.copy(), hi_s.copy()
            fixed = np.floor(x[int_idx] + INTEGRALITY_TOL)
            lo_h[int_idx] = fixed
            hi_h[int_idx] = fixed
            h_core = _solve_bounded(c_min, A, b, rels, lo_h, hi_h)
            nodes += 1
            if h_core["status"] == STATUS_OPTIMAL:
                hx = h_core["x"].copy()
                hx[int_idx] = fixed
                h_val = float(c_min @ hx)
                if h_val < inc_val:
                    incumbent = hx
                    inc_val = h_val
        dist = np.minimum(x[int_idx] - np.floor(x[int_idx]), np.ceil(x[int_idx]) - x[int_idx])
        dist[frac <= INTEGRALITY_TOL] = -1.0
        dist[lo_s[int_idx] >= hi_s[int_idx]] = -1.0  # never branch a fixed variable
        j = int(int_idx[int(np.argmax(dist))])
        lo_dn, hi_dn = lo_s.copy(), hi_s.copy()
        hi_dn[j] = np.floor(x[j])
        lo_up, hi_up = lo_s.copy(), hi_s.copy()
        lo_up[j] = np.ceil(x[j])
        counter += 1
        heapq.heappush(heap, (val, counter, lo_dn, hi_dn))
        counter += 1
        heapq.heappush(heap, (val, counter, lo_up, hi_up))

    if incumbent is None:
        return LpSolution(status=STATUS_INFEASIBLE, nodes=nodes)
    return LpSolution(
        status=STATUS_OPTIMAL,
        x=incumbent,
        objective=flip * inc_val,
        nodes=nodes,
    )


def to_lp_format(lp: LinearProgram, name: str = "problem") -> str:
    """Dump the program in LP text format for cross-checks in other solvers."""
    lines = [f"\\ {name}"]
    lines.append("Minimize" if lp.sense == "min" else "Maximize")
    lines.append(" obj: " + _lin_expr(lp.objective))
    lines.append("Subject To")
    for k, (coeffs, rel, rhs) in enumerate(lp.rows):
        op = {LE: "<=", EQ: "=", GE: ">="}[rel]
        lines.append(f" r{k}: " + _lin_expr(coeffs) + f" {op} {rhs!r}")
    lines.append("Bounds")
    for j in range(lp.n_vars):
        lo, hi = lp.var_bounds[j]
        lo_s = "-inf" if lo == -np.inf else repr(float(lo))
        hi_s = "+inf" if hi == np.inf else repr(float(hi))
        lines.append(f" {lo_s} <= x{j} <= {hi_s}")
    if np.any(lp.integrality):
        lines.append("Binaries")
        lines.append(" " + " ".join(f"x{j}" for j in np.where(lp.integrality)[0]))
    lines.append("End")
    return "\n".join(lines) + "\n"


def _lin_expr(coeffs) -> str:
    terms = []
    for j, cj in enumerate(coeffs):
        if cj == 0.0:
            continue
        sign = "+" if cj >= 0 else "-"
        terms.append(f"{sign} {abs(float(cj))!r} x{j}")
    if not terms:
        return "0"
    out = " ".join(terms)
    return out[2:] if out.startswith("+ ") else out
