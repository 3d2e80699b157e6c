"""Split-interval calibration of the outage uncertainty set.

Given historical (feature, outage) observations, fit a per-region ridge
predictor on a training split, score the held-out calibration split with
absolute residuals (per region, plus one pooled score on the summed
residual), and turn the finite-sample order-statistic quantiles of those
scores into per-region and system-wide prediction intervals. Intersecting
the intervals gives the box-plus-budget polyhedron consumed by the solver.

Fitting and scoring are pure functions of their inputs; a fitted Regressor
is immutable and safe to share across threads.
"""

from __future__ import annotations

import io
import math
from dataclasses import dataclass

import numpy as np

from .errors import CalibrationError, CoverageError, DataError, DimensionError
from .model import UncertaintySet

DEFAULT_RIDGE = 1e-6


@dataclass(frozen=True)
class ObservationSet:
    """Historical observations: W has shape (m, n, p), U shape (m, n)."""

    W: np.ndarray
    U: np.ndarray

    def __post_init__(self):
        W = np.asarray(self.W, dtype=float)
        U = np.asarray(self.U, dtype=float)
        if W.ndim != 3 or U.ndim != 2 or W.shape[:2] != U.shape:
            raise DimensionError(
                f"W must be (m, n, p) and U (m, n); got {W.shape} and {U.shape}"
            )
        if np.any(U < 0):
            raise ValueError("outage observations must be nonnegative")
        W.setflags(write=False)
        U.setflags(write=False)
        object.__setattr__(self, "W", W)
        object.__setattr__(self, "U", U)

    def __len__(self) -> int:
        return self.W.shape[0]

    @property
    def n(self) -> int:
        return self.W.shape[1]

    @property
    def p(self) -> int:
        return self.W.shape[2]

    @property
    def records(self):
        """Iterate (w, u) pairs, matching the on-disk row grouping."""
        return list(zip(self.W, self.U))

    def subset(self, indices) -> "ObservationSet":
        idx = np.asarray(indices, dtype=int)
        return ObservationSet(W=self.W[idx], U=self.U[idx])

    def to_csv(self) -> str:
        """Rows ``sample_id, region_id, u, f1..fp``, one per (sample, region)."""
        buf = io.StringIO()
        header = "sample_id,region_id,u," + ",".join(f"f{k + 1}" for k in range(self.p))
        buf.write(header + "\n")
        for j in range(len(self)):
            for i in range(self.n):
                feats = ",".join(repr(float(v)) for v in self.W[j, i])
                buf.write(f"{j},{i},{float(self.U[j, i])!r},{feats}\n")
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str) -> "ObservationSet":
        lines = [ln for ln in text.strip().splitlines() if ln.strip()]
        if not lines:
            raise DataError("empty observation CSV")
        header = lines[0].split(",")
        if header[:3] != ["sample_id", "region_id", "u"]:
            raise DataError(f"unexpected observation CSV header: {lines[0]!r}")
        p = len(header) - 3
        rows = {}
        for ln in lines[1:]:
            parts = ln.split(",")
            j, i = int(parts[0]), int(parts[1])
            rows[(j, i)] = [float(v) for v in parts[2:]]
        m = 1 + max(k[0] for k in rows)
        n = 1 + max(k[1] for k in rows)
        if len(rows) != m * n:
            raise DataError("observation CSV has missing (sample, region) rows")
        W = np.empty((m, n, p))
        U = np.empty((m, n))
        for (j, i), vals in rows.items():
            U[j, i] = vals[0]
            W[j, i] = vals[1:]
        return cls(W=W, U=U)

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(self.to_csv())

    @classmethod
    def load(cls, path) -> "ObservationSet":
        with open(path, "r", encoding="utf-8") as fh:
            return cls.from_csv(fh.read())


@dataclass(frozen=True)
class Regressor:
    """Per-region linear predictor: coef[i] = (intercept, w_1..w_p)."""

    coef: np.ndarray

    def __post_init__(self):
        coef = np.asarray(self.coef, dtype=float)
        if coef.ndim != 2:
            raise DimensionError("coef must be an (n, p+1) matrix")
        if not np.all(np.isfinite(coef)):
            raise DataError("regressor coefficients must be finite")
        coef.setflags(write=False)
        object.__setattr__(self, "coef", coef)

    @property
    def n(self) -> int:
        return self.coef.shape[0]

    @property
    def p(self) -> int:
        return self.coef.shape[1] - 1


@dataclass(frozen=True)
class CalibrationScores:
    """Nonconformity scores: local has shape (n, m_cal), pooled (m_cal,)."""

    local: np.ndarray
    pooled: np.ndarray

    def __post_init__(self):
        local = np.asarray(self.local, dtype=float)
        pooled = np.asarray(self.pooled, dtype=float)
        if local.ndim != 2 or pooled.ndim != 1 or local.shape[1] != pooled.shape[0]:
            raise DimensionError("local must be (n, m) and pooled (m,)")
        if np.any(local < 0) or np.any(pooled < 0):
            raise ValueError("nonconformity scores must be nonnegative")
        local.setflags(write=False)
        pooled.setflags(write=False)
        object.__setattr__(self, "local", local)
        object.__setattr__(self, "pooled", pooled)


def split_observations(data: ObservationSet, train_fraction: float, seed: int):
    """Disjoint train/calibration split, deterministic for a fixed seed."""
    m = len(data)
    if m < 4:
        raise CalibrationError(f"need at least 4 observations to split, got {m}")
    if not 0.0 < train_fraction < 1.0:
        raise ValueError("train_fraction must lie in (0, 1)")
    n_train = int(round(train_fraction * m))
    if n_train < 1 or n_train >= m:
        raise CalibrationError(
            f"train fraction {train_fraction} leaves an empty split for m={m}"
        )
    perm = np.random.default_rng(seed).permutation(m)
    train_idx = np.sort(perm[:n_train])
    cal_idx = np.sort(perm[n_train:])
    return data.subset(train_idx), data.subset(cal_idx)


def fit_regressor(train: ObservationSet, ridge: float = DEFAULT_RIDGE) -> Regressor:
    """Per-region ridge least squares of u_i on region i's feature row.

    Features are standardized internally; the ridge term keeps the normal
    equations solvable even for rank-deficient designs. Coefficients are
    returned in raw feature units.
    """
    m, n, p = len(train), train.n, train.p
    if m < p + 2:
        raise CalibrationError(f"need at least p+2={p + 2} training samples, got {m}")
    if not np.all(np.isfinite(train.W)):
        raise DataError("training features contain non-finite values")
    coef = np.empty((n, p + 1))
    for i in range(n):
        X = train.W[:, i, :]
        u = train.U[:, i]
        mean = X.mean(axis=0)
        std = X.std(axis=0)
        std[std < 1e-12] = 1.0
        Z = (X - mean) / std
        u_mean = u.mean()
        G = Z.T @ Z + ridge * np.eye(p)
        beta = np.linalg.solve(G, Z.T @ (u - u_mean))
        w = beta / std
        coef[i, 0] = u_mean - float(w @ mean)
        coef[i, 1:] = w
    return Regressor(coef=coef)


def predict(model: Regressor, w) -> np.ndarray:
    """Predicted outage vector for one (n, p) feature matrix, clipped at 0."""
    w = np.asarray(w, dtype=float)
    if w.shape != (model.n, model.p):
        raise DimensionError(
            f"feature matrix must have shape ({model.n}, {model.p}), got {w.shape}"
        )
    raw = model.coef[:, 0] + np.einsum("ip,ip->i", w, model.coef[:, 1:])
    return np.maximum(raw, 0.0)


def nonconformity_scores(model: Regressor, cal: ObservationSet) -> CalibrationScores:
    """Absolute residuals per region plus the absolute summed residual."""
    m = len(cal)
    if m < 1:
        raise CalibrationError("calibration set is empty")
    local = np.empty((cal.n, m))
    pooled = np.empty(m)
    for j in range(m):
        resid = cal.U[j] - predict(model, cal.W[j])
        local[:, j] = np.abs(resid)
        pooled[j] = abs(float(np.sum(resid)))
    return CalibrationScores(local=local, pooled=pooled)


def conformal_quantile(scores, alpha: float) -> float:
    """Finite-sample upper quantile: the ceil((m+1)(1-alpha))-th smallest score.

    Returns +inf when that index exceeds m (the coverage level is not
    achievable with m calibration points). A 1e-9 slack keeps the ceiling
    stable against floating-point representation of (m+1)(1-alpha).
    """
    scores = np.asarray(scores, dtype=float)
    m = scores.shape[0]
    if m == 0:
        raise CalibrationError("cannot take a quantile of zero scores")
    if not 0.0 < alpha < 1.0:
        raise ValueError("alpha must lie in (0, 1)")
    k = math.ceil((m + 1) * (1.0 - alpha) - 1e-9)
    if k > m:
        return math.inf
    return float(np.sort(scores)[k - 1])


def build_uncertainty_set(
    model: Regressor, scores: CalibrationScores, alpha: float, w
) -> UncertaintySet:
    """Intervals prediction +- quantile, clipped at zero, for one feature matrix.

    The system-wide predictor is the sum of the per-region predictions; its
    interval uses the pooled-score quantile. Raises CoverageError when any
    quantile is the +inf sentinel.
    """
    n = model.n
    kappa = predict(model, w)
    q_local = np.empty(n)
    for i in range(n):
        q_local[i] = conformal_quantile(scores.local[i], alpha)
    q_global = conformal_quantile(scores.pooled, alpha)
    if not np.all(np.isfinite(q_local)) or not math.isfinite(q_global):
        m = scores.pooled.shape[0]
        raise CoverageError(
            f"coverage level 1-alpha with alpha={alpha} is unachievable with "
            f"{m} calibration samples (needs ceil((m+1)(1-alpha)) <= m)"
        )
    local_lower = np.maximum(kappa - q_local, 0.0)
    local_upper = np.maximum(kappa + q_local, 0.0)
    total = float(np.sum(kappa))
    global_lower = max(total - q_global, 0.0)
    global_upper = max(total + q_global, 0.0)
    global_lower, global_upper = _repair_global_interval(
        local_lower, local_upper, global_lower, global_upper
    )
    return UncertaintySet(
        local_lower=local_lower,
        local_upper=local_upper,
        global_lower=global_lower,
        global_upper=global_upper,
        alpha=alpha,
    )


def _repair_global_interval(local_lower, local_upper, g_lo, g_hi):
    """Widen the global interval minimally if clipping emptied the polyhedron."""
    import warnings

    lo_sum = float(np.sum(local_lower))
    hi_sum = float(np.sum(local_upper))
    if g_lo > hi_sum:
        warnings.warn(
            "global lower bound exceeds the sum of local uppers; widening down",
            stacklevel=2,
        )
        g_lo = hi_sum
    if g_hi < lo_sum:
        warnings.warn(
            "global upper bound is below the sum of local lowers; widening up",
            stacklevel=2,
        )
        g_hi = lo_sum
    return g_lo, g_hi


def empirical_coverage(
    model: Regressor, scores: CalibrationScores, alpha: float, test: ObservationSet
):
    """Fraction of test records inside each interval and inside the full set.

    Returns (local_rates, global_rate, joint_rate); the joint rate counts
    records satisfying every local interval and the global one at once.
    """
    m = len(test)
    if m < 1:
        raise CalibrationError("test set is empty")
    n = model.n
    local_hits = np.zeros(n)
    global_hits = 0
    joint_hits = 0
    for j in range(m):
        omega = build_uncertainty_set(model, scores, alpha, test.W[j])
        u = test.U[j]
        in_local = (u >= omega.local_lower) & (u <= omega.local_upper)
        total = float(np.sum(u))
        in_global = omega.global_lower <= total <= omega.global_upper
        local_hits += in_local
        global_hits += in_global
        joint_hits += bool(np.all(in_local) and in_global)
    return local_hits / m, global_hits / m, joint_hits / m
