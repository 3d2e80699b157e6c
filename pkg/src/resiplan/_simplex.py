"""Dense bounded-variable primal simplex pivot kernel.

Operates on a row-reduced tableau ``T`` with ``T[:, basis] == I``. Variable
states: nonbasic at lower bound, nonbasic at upper bound, basic, or nonbasic
free (held at 0). The entering variable is the lowest-index improving
column in a fixed cyclic scan order; the leaving row comes from a Harris
two-pass ratio test that prefers large pivot magnitudes among admissible
rows. Both rules are fixed, so every solve is deterministic.

The kernel runs in bursts: when the chosen pivot element is smaller than
``stab_tol`` it bails out with ``KERNEL_REFACTOR`` so the driver can rebuild
the tableau exactly from the basis before continuing. ``trust_first`` lets
the first pivot after a fresh refactorization proceed even with a small
pivot element (at that point small means genuinely small, not drift).

The function body is plain numpy so it runs unmodified on the pure-numpy
fallback path; with numba present it is compiled via ``_accel.jit_kernel``.
"""

import numpy as np

from ._accel import jit_kernel

AT_LOWER = 0
AT_UPPER = 1
BASIC = 2
FREE = 3

KERNEL_OPTIMAL = 0
KERNEL_UNBOUNDED = 1
KERNEL_PIVOT_LIMIT = 2
KERNEL_REFACTOR = 3


def _pivot_phase_py(
    T, xB, cred, lo, hi, basis, vstat, max_pivots, dual_tol, piv_tol, stab_tol,
    trust_first, scan_start,
):
    """Pivot until optimal, unbounded, refactor-needed, or the burst cap.

    Entering selection is lowest-index in the fixed cyclic order that starts
    at column ``scan_start`` (phase 1 passes the first slack column so row
    residuals are absorbed by slacks instead of bound-flipping structural
    variables; phase 2 passes 0). Mutates T, xB, cred, basis, vstat in
    place. Returns (status, pivots_used, aux) where aux is the entering
    variable for KERNEL_UNBOUNDED and KERNEL_REFACTOR, else -1.
    """
    m, N = T.shape
    pivots = 0
    while pivots < max_pivots:
        # Entering variable: first improving reduced cost in the scan order.
        enter = -1
        direction = 1.0
        for jj in range(N):
            j = jj + scan_start
            if j >= N:
                j -= N
            s = vstat[j]
            if s == BASIC:
                continue
            d = cred[j]
            if s == FREE:
                if d < -dual_tol:
                    enter = j
                    direction = 1.0
                    break
                if d > dual_tol:
                    enter = j
                    direction = -1.0
                    break
            else:
                if hi[j] - lo[j] <= 0.0:
                    continue  # fixed variable can never move
                if s == AT_LOWER and d < -dual_tol:
                    enter = j
                    direction = 1.0
                    break
                if s == AT_UPPER and d > dual_tol:
                    enter = j
                    direction = -1.0
                    break
        if enter < 0:
            return KERNEL_OPTIMAL, pivots, -1

        if vstat[enter] == FREE:
            limit = np.inf
        else:
            limit = hi[enter] - lo[enter]

        # Harris two-pass ratio test. Pass 1 finds the largest step that keeps
        # every basic variable within feas_slack of its bound; pass 2 picks,
        # among rows that strictly block within that step, the one with the
        # largest pivot magnitude (ties by lowest basic-variable index).
        # Tiny-pivot rows then only matter when they genuinely bind, and the
        # bounded slack keeps the chosen pivots numerically solid.
        feas_slack = 1e-7
        theta_max = np.inf
        for r in range(m):
            rate = -direction * T[r, enter]
            bv = basis[r]
            if rate > piv_tol:
                bnd = hi[bv]
                if bnd == np.inf:
                    continue
                ratio = (bnd + feas_slack - xB[r]) / rate
            elif rate < -piv_tol:
                bnd = lo[bv]
                if bnd == -np.inf:
                    continue
                ratio = (bnd - feas_slack - xB[r]) / rate
            else:
                continue
            if ratio < theta_max:
                theta_max = ratio
        if theta_max < 0.0:
            theta_max = 0.0
        leave = -1
        leave_bv = -1
        leave_to = AT_LOWER
        leave_mag = 0.0
        best = np.inf
        if theta_max < np.inf:
            for r in range(m):
                rate = -direction * T[r, enter]
                bv = basis[r]
                if rate > piv_tol:
                    bnd = hi[bv]
                    if bnd == np.inf:
                        continue
                    ratio = (bnd - xB[r]) / rate
                    to = AT_UPPER
                elif rate < -piv_tol:
                    bnd = lo[bv]
                    if bnd == -np.inf:
                        continue
                    ratio = (bnd - xB[r]) / rate
                    to = AT_LOWER
                else:
                    continue
                if ratio < 0.0:
                    ratio = 0.0
                if ratio > theta_max:
                    continue
                mag = rate if rate > 0.0 else -rate
                if mag > leave_mag or (mag == leave_mag and leave_bv >= 0 and bv < leave_bv):
                    leave = r
                    leave_bv = bv
                    leave_to = to
                    leave_mag = mag
                    best = ratio

        if limit <= best:
            if limit == np.inf:
                return KERNEL_UNBOUNDED, pivots, enter
            # Bound flip: the entering variable crosses its own span first.
            for r in range(m):
                xB[r] -= direction * T[r, enter] * limit
            vstat[enter] = AT_UPPER if vstat[enter] == AT_LOWER else AT_LOWER
            pivots += 1
            continue

        pv = T[leave, enter]
        if abs(pv) < stab_tol and not (pivots == 0 and trust_first == 1):
            # Too unstable to divide by; let the driver rebuild the tableau.
            return KERNEL_REFACTOR, pivots, enter

        delta = best
        if vstat[enter] == AT_LOWER:
            start = lo[enter]
        elif vstat[enter] == AT_UPPER:
            start = hi[enter]
        else:
            start = 0.0
        for r in range(m):
            xB[r] -= direction * T[r, enter] * delta

        w = basis[leave]
        prow = T[leave, :] / pv
        pcol = T[:, enter].copy()
        pcol[leave] = 0.0
        T[leave, :] = prow
        T -= pcol.reshape(m, 1) * prow.reshape(1, N)
        T[:, enter] = 0.0
        T[leave, enter] = 1.0
        cf = cred[enter]
        if cf != 0.0:
            cred -= cf * prow
        cred[enter] = 0.0

        basis[leave] = enter
        vstat[enter] = BASIC
        vstat[w] = leave_to
        xB[leave] = start + direction * delta
        pivots += 1

    return KERNEL_PIVOT_LIMIT, pivots, -1


pivot_phase = jit_kernel(_pivot_phase_py)
