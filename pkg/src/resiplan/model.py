"""Planning-problem data model.

Holds the immutable instance description (region costs and the two budgets),
the interval-based uncertainty set for outage vectors, feasibility predicates
for both budget sets, and the tri-linear outage-cost evaluator. Everything
here is pure and safe to share across threads.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .errors import DimensionError

VARIANT_FULL = "full"
VARIANT_LOCAL_ONLY = "local_only"
VARIANT_GLOBAL_ONLY = "global_only"
VARIANTS = (VARIANT_FULL, VARIANT_LOCAL_ONLY, VARIANT_GLOBAL_ONLY)


def _vector(values, n: int, name: str) -> np.ndarray:
    arr = np.asarray(values, dtype=float)
    if arr.ndim != 1 or arr.shape[0] != n:
        raise DimensionError(f"{name} must be a length-{n} vector, got shape {arr.shape}")
    return arr


def _frozen(arr: np.ndarray) -> np.ndarray:
    arr = np.array(arr, dtype=float)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class Instance:
    """A planning problem over ``n`` regions.

    ``b`` and ``c`` are the per-region proactive and reactive action costs,
    ``h`` the per-unit outage cost, ``B`` and ``C`` the two budgets. All
    monies are doubles; feasibility comparisons are exact (no tolerance).
    """

    n: int
    b: np.ndarray
    c: np.ndarray
    h: np.ndarray
    B: float
    C: float

    def __post_init__(self):
        n = int(self.n)
        if n < 1:
            raise ValueError(f"instance needs at least one region, got n={n}")
        object.__setattr__(self, "n", n)
        for name in ("b", "c", "h"):
            vec = _vector(getattr(self, name), n, name)
            if not np.all(vec > 0.0):
                raise ValueError(f"{name} must be strictly positive")
            object.__setattr__(self, name, _frozen(vec))
        for name in ("B", "C"):
            val = float(getattr(self, name))
            if val < 0.0:
                raise ValueError(f"{name} must be nonnegative, got {val}")
            object.__setattr__(self, name, val)

    def to_json(self) -> str:
        payload = {
            "n": self.n,
            "b": self.b.tolist(),
            "c": self.c.tolist(),
            "h": self.h.tolist(),
            "B": self.B,
            "C": self.C,
        }
        return json.dumps(payload, indent=2)

    @classmethod
    def from_json(cls, text: str) -> "Instance":
        d = json.loads(text)
        return cls(n=d["n"], b=d["b"], c=d["c"], h=d["h"], B=d["B"], C=d["C"])

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(self.to_json())

    @classmethod
    def load(cls, path) -> "Instance":
        with open(path, "r", encoding="utf-8") as fh:
            return cls.from_json(fh.read())


@dataclass(frozen=True)
class UncertaintySet:
    """Box-plus-budget polyhedron of plausible outage vectors.

    Per-region intervals ``[local_lower_i, local_upper_i]`` plus one interval
    ``[global_lower, global_upper]`` on the sum of all regions, built at
    miscoverage level ``alpha``. All lower bounds are nonnegative and the
    polyhedron is validated to be non-empty at construction.
    """

    local_lower: np.ndarray
    local_upper: np.ndarray
    global_lower: float
    global_upper: float
    alpha: float

    def __post_init__(self):
        lo = np.asarray(self.local_lower, dtype=float)
        hi = np.asarray(self.local_upper, dtype=float)
        if lo.ndim != 1 or lo.shape != hi.shape:
            raise DimensionError(
                f"local bounds must be equal-length vectors, got {lo.shape} and {hi.shape}"
            )
        if np.any(lo > hi):
            raise ValueError("local_lower exceeds local_upper in some region")
        if np.any(lo < 0.0):
            raise ValueError("local_lower must be nonnegative after clipping")
        g_lo = float(self.global_lower)
        g_hi = float(self.global_upper)
        if g_lo > g_hi:
            raise ValueError(f"global interval is empty: [{g_lo}, {g_hi}]")
        if g_lo < 0.0:
            raise ValueError("global_lower must be nonnegative after clipping")
        alpha = float(self.alpha)
        if not 0.0 < alpha < 1.0:
            raise ValueError(f"alpha must lie in (0, 1), got {alpha}")
        # Non-emptiness: the global interval must meet the Minkowski sum of
        # the local intervals, otherwise no outage vector satisfies all rows.
        if g_lo > float(np.sum(hi)) or g_hi < float(np.sum(lo)):
            raise ValueError(
                "empty uncertainty set: global interval "
                f"[{g_lo}, {g_hi}] does not intersect [{np.sum(lo)}, {np.sum(hi)}]"
            )
        object.__setattr__(self, "local_lower", _frozen(lo))
        object.__setattr__(self, "local_upper", _frozen(hi))
        object.__setattr__(self, "global_lower", g_lo)
        object.__setattr__(self, "global_upper", g_hi)
        object.__setattr__(self, "alpha", alpha)

    @property
    def n(self) -> int:
        return self.local_lower.shape[0]

    def to_json(self) -> str:
        payload = {
            "alpha": self.alpha,
            "local_lower": self.local_lower.tolist(),
            "local_upper": self.local_upper.tolist(),
            "global_lower": self.global_lower,
            "global_upper": self.global_upper,
        }
        return json.dumps(payload, indent=2)

    @classmethod
    def from_json(cls, text: str) -> "UncertaintySet":
        d = json.loads(text)
        return cls(
            local_lower=d["local_lower"],
            local_upper=d["local_upper"],
            global_lower=d["global_lower"],
            global_upper=d["global_upper"],
            alpha=d["alpha"],
        )

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(self.to_json())

    @classmethod
    def load(cls, path) -> "UncertaintySet":
        with open(path, "r", encoding="utf-8") as fh:
            return cls.from_json(fh.read())


@dataclass(frozen=True)
class Decision:
    """One full decision triple: proactive x, reactive y, outage vector u."""

    x: np.ndarray
    y: np.ndarray
    u: np.ndarray

    def __post_init__(self):
        x = np.asarray(self.x, dtype=float)
        y = np.asarray(self.y, dtype=float)
        u = np.asarray(self.u, dtype=float)
        if not (x.shape == y.shape == u.shape) or x.ndim != 1:
            raise DimensionError("x, y, u must be vectors of one common length")
        if not np.all((x == 0.0) | (x == 1.0)):
            raise ValueError("x entries must be exactly 0 or 1")
        if np.any(y < 0.0) or np.any(y > 1.0):
            raise ValueError("y entries must lie in [0, 1]")
        if np.any(u < 0.0):
            raise ValueError("u entries must be nonnegative")
        object.__setattr__(self, "x", _frozen(x))
        object.__setattr__(self, "y", _frozen(y))
        object.__setattr__(self, "u", _frozen(u))


def feasible_proactive(x, inst: Instance) -> bool:
    """True iff x is binary and its proactive spend fits the budget B."""
    x = _vector(x, inst.n, "x")
    if not np.all((x == 0.0) | (x == 1.0)):
        return False
    return float(inst.b @ x) <= inst.B


def feasible_reactive(y, inst: Instance) -> bool:
    """True iff the reactive spend of y fits the budget C."""
    y = _vector(y, inst.n, "y")
    return float(inst.c @ y) <= inst.C


def outage_cost(inst: Instance, x, u, y) -> float:
    """Total outage cost sum_i h_i u_i (1 - x_i) (1 - y_i).

    Each region contributes only when neither the proactive nor the reactive
    switch protects it.
    """
    x = _vector(x, inst.n, "x")
    u = _vector(u, inst.n, "u")
    y = _vector(y, inst.n, "y")
    return float(np.sum(inst.h * u * (1.0 - x) * (1.0 - y)))


def membership(u, omega: UncertaintySet, tol: float = 0.0) -> bool:
    """True iff u satisfies every local interval and the global interval."""
    u = _vector(u, omega.n, "u")
    if np.any(u < omega.local_lower - tol) or np.any(u > omega.local_upper + tol):
        return False
    total = float(np.sum(u))
    return omega.global_lower - tol <= total <= omega.global_upper + tol


def uncertainty_variant(omega: UncertaintySet, variant: str) -> UncertaintySet:
    """Restrict the uncertainty set to one of the benchmark variants.

    ``local_only`` drops the global row (replaced by its vacuous hull);
    ``global_only`` keeps the global interval and lets any single region
    absorb the whole global budget (per-region box [0, global_upper]).
    """
    if variant == VARIANT_FULL:
        return omega
    if variant == VARIANT_LOCAL_ONLY:
        return UncertaintySet(
            local_lower=omega.local_lower,
            local_upper=omega.local_upper,
            global_lower=float(np.sum(omega.local_lower)),
            global_upper=float(np.sum(omega.local_upper)),
            alpha=omega.alpha,
        )
    if variant == VARIANT_GLOBAL_ONLY:
        n = omega.n
        return UncertaintySet(
            local_lower=np.zeros(n),
            local_upper=np.full(n, omega.global_upper),
            global_lower=omega.global_lower,
            global_upper=omega.global_upper,
            alpha=omega.alpha,
        )
    raise ValueError(f"unknown uncertainty variant {variant!r}; expected one of {VARIANTS}")
