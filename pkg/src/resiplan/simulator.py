"""Synthetic outage-history generator.

Each region runs independent susceptible-infected-recovered customer
dynamics (unaffected, disrupted, recovered) driven by a deterministic
weather field over the unit square. A sample jitters the whole coordinate
layout by one shared shift (a weather system moving over the grid),
re-derives the per-region disruption rates, integrates the dynamics with
forward Euler, and reads off the normalized disrupted-customer time
integral plus a small population-scaled Gaussian noise term.

The Euler stepping is the hot loop and runs through the numba kernel
(``_accel``); sample generation draws from independent per-sample RNG
streams keyed on (seed, sample index), so parallel and serial generation
would produce identical datasets.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from ._accel import jit_kernel
from .conformal import ObservationSet
from .errors import SimulationError

STEP_CAP = 1_000_000
HALT_DISRUPTED = 0.5  # customers; exact zero is unreachable in floating point


@dataclass(frozen=True)
class SirConfig:
    """Configuration of the per-region outage dynamics.

    ``nu`` holds the per-region customer populations, ``coords`` the region
    centers in the unit square. ``chi`` scales the observation noise, whose
    standard deviation in region i is chi / nu_i.
    """

    n: int
    nu: np.ndarray
    coords: np.ndarray
    rho: float = 0.1
    dtau: float = 0.1
    chi: float = 0.1
    initial_disrupted: float = 1.0
    seed: int = 0

    def __post_init__(self):
        n = int(self.n)
        nu = np.asarray(self.nu, dtype=float)
        coords = np.asarray(self.coords, dtype=float)
        if nu.shape != (n,):
            raise ValueError(f"nu must have shape ({n},), got {nu.shape}")
        if coords.shape != (n, 2):
            raise ValueError(f"coords must have shape ({n}, 2), got {coords.shape}")
        if np.any(nu <= 0):
            raise ValueError("populations must be positive")
        if self.dtau <= 0 or self.rho <= 0:
            raise ValueError("dtau and rho must be positive")
        if not 0 < self.initial_disrupted < float(np.min(nu)):
            raise ValueError("initial_disrupted must be in (0, min population)")
        object.__setattr__(self, "n", n)
        nu.setflags(write=False)
        coords.setflags(write=False)
        object.__setattr__(self, "nu", nu)
        object.__setattr__(self, "coords", coords)

    def to_json(self) -> str:
        payload = {
            "n": self.n,
            "nu": self.nu.tolist(),
            "coords": self.coords.tolist(),
            "rho": self.rho,
            "dtau": self.dtau,
            "chi": self.chi,
            "initial_disrupted": self.initial_disrupted,
            "seed": self.seed,
        }
        return json.dumps(payload, indent=2)

    @classmethod
    def from_json(cls, text: str) -> "SirConfig":
        d = json.loads(text)
        return cls(**d)

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(self.to_json())

    @classmethod
    def load(cls, path) -> "SirConfig":
        with open(path, "r", encoding="utf-8") as fh:
            return cls.from_json(fh.read())


@dataclass(frozen=True)
class SirTrajectory:
    """Euler trajectory of the three customer compartments.

    Arrays have shape (steps + 1, n); row k is the state after k steps.
    The compartments conserve the population at every step and the
    unaffected (recovered) counts are monotone decreasing (increasing).
    """

    unaffected: np.ndarray
    disrupted: np.ndarray
    recovered: np.ndarray
    nu: np.ndarray
    dtau: float

    @property
    def steps(self) -> int:
        return self.unaffected.shape[0] - 1

    def outage_integral(self) -> np.ndarray:
        """Left-Riemann integral of the disrupted share: sum Gamma dtau / nu."""
        return self.disrupted[:-1, :].sum(axis=0) * self.dtau / self.nu


def weather_field(coords) -> np.ndarray:
    """Deterministic (n, 3) weather matrix over unit-square coordinates.

    Columns: temperature, wind speed, relative humidity; all smooth
    periodic fields, so nearby regions see similar weather.
    """
    coords = np.asarray(coords, dtype=float)
    q = coords[:, 0]
    r = coords[:, 1]
    w = np.empty((coords.shape[0], 3))
    w[:, 0] = 20.0 + 5.0 * np.sin(2 * np.pi * q) * np.cos(2 * np.pi * r)
    w[:, 1] = 10.0 + 3.0 * np.cos(2 * np.pi * q) * np.sin(2 * np.pi * r)
    w[:, 2] = 0.5 + 0.1 * np.sin(2 * np.pi * q) * np.cos(2 * np.pi * r)
    return w


def disruption_rate(w_row) -> float:
    """Disruption rate from one weather row, clamped away from zero."""
    w_row = np.asarray(w_row, dtype=float)
    beta = (
        0.3
        + 0.01 * (w_row[0] - 20.0)
        + 0.005 * (w_row[1] - 10.0)
        - 0.005 * (w_row[2] - 0.5)
    )
    return float(max(beta, 1e-6))


def disruption_rates(weather) -> np.ndarray:
    """Vectorized disruption rates for an (n, 3) weather matrix."""
    weather = np.asarray(weather, dtype=float)
    beta = (
        0.3
        + 0.01 * (weather[:, 0] - 20.0)
        + 0.005 * (weather[:, 1] - 10.0)
        - 0.005 * (weather[:, 2] - 0.5)
    )
    return np.maximum(beta, 1e-6)


def _sir_count_py(nu, beta, rho, dtau, gamma0, halt, cap):
    """Integrate until every region's disrupted count drops below halt.

    Returns (integral of Gamma dtau, final ups, final gam, final xi,
    steps, status) with status 0 on success and 1 on hitting the cap.
    """
    n = nu.shape[0]
    ups = np.empty(n)
    gam = np.empty(n)
    xi = np.empty(n)
    for i in range(n):
        ups[i] = nu[i] - gamma0
        gam[i] = gamma0
        xi[i] = 0.0
    integral = np.zeros(n)
    steps = 0
    while True:
        gmax = 0.0
        for i in range(n):
            if gam[i] > gmax:
                gmax = gam[i]
        if gmax < halt:
            return integral, ups, gam, xi, steps, 0
        if steps >= cap:
            return integral, ups, gam, xi, steps, 1
        for i in range(n):
            integral[i] += gam[i] * dtau
            new_disruptions = beta[i] * ups[i] * gam[i] / nu[i] * dtau
            recoveries = rho * gam[i] * dtau
            ups[i] -= new_disruptions
            gam[i] += new_disruptions - recoveries
            xi[i] += recoveries
            if ups[i] < 0.0:
                ups[i] = 0.0
            if gam[i] < 0.0:
                gam[i] = 0.0
        steps += 1


def _sir_fill_py(nu, beta, rho, dtau, gamma0, steps, out_ups, out_gam, out_xi):
    """Replay exactly ``steps`` Euler updates, recording every state."""
    n = nu.shape[0]
    for i in range(n):
        out_ups[0, i] = nu[i] - gamma0
        out_gam[0, i] = gamma0
        out_xi[0, i] = 0.0
    for k in range(steps):
        for i in range(n):
            ups = out_ups[k, i]
            gam = out_gam[k, i]
            xi = out_xi[k, i]
            new_disruptions = beta[i] * ups * gam / nu[i] * dtau
            recoveries = rho * gam * dtau
            ups -= new_disruptions
            gam += new_disruptions - recoveries
            xi += recoveries
            if ups < 0.0:
                ups = 0.0
            if gam < 0.0:
                gam = 0.0
            out_ups[k + 1, i] = ups
            out_gam[k + 1, i] = gam
            out_xi[k + 1, i] = xi


sir_count = jit_kernel(_sir_count_py)
sir_fill = jit_kernel(_sir_fill_py)


def simulate_sir(config: SirConfig, beta) -> SirTrajectory:
    """Forward-Euler integration of the outage dynamics until they die out.

    Raises SimulationError when the disruption has not resolved within the
    step cap (reporting the largest remaining disrupted count).
    """
    beta = np.asarray(beta, dtype=float)
    if beta.shape != (config.n,):
        raise ValueError(f"beta must have shape ({config.n},), got {beta.shape}")
    nu = np.asarray(config.nu, dtype=float)
    _, _, gam_end, _, steps, status = sir_count(
        nu, beta, config.rho, config.dtau, config.initial_disrupted,
        HALT_DISRUPTED, STEP_CAP,
    )
    if status != 0:
        raise SimulationError(
            f"outage dynamics not resolved after {steps} steps; "
            f"max disrupted still {float(np.max(gam_end)):.3f} customers"
        )
    ups = np.empty((steps + 1, config.n))
    gam = np.empty((steps + 1, config.n))
    xi = np.empty((steps + 1, config.n))
    sir_fill(nu, beta, config.rho, config.dtau, config.initial_disrupted, steps, ups, gam, xi)
    return SirTrajectory(
        unaffected=ups, disrupted=gam, recovered=xi, nu=nu, dtau=config.dtau
    )


def simulate_outages(config: SirConfig, trajectory: SirTrajectory, rng) -> np.ndarray:
    """Observed outage vector: normalized disruption integral plus noise.

    Noise is Gaussian with standard deviation chi / nu_i (denser regions
    report more precisely); the final value is clipped at zero.
    """
    base = trajectory.outage_integral()
    noise = rng.normal(0.0, config.chi / np.asarray(config.nu, dtype=float))
    return np.maximum(base + noise, 0.0)


def _reflect_unit(v: np.ndarray) -> np.ndarray:
    """Reflect values in [-0.5, 1.5] back into the unit interval."""
    v = np.where(v < 0.0, -v, v)
    return np.where(v > 1.0, 2.0 - v, v)


def sample_rng(seed: int, sample_id: int) -> np.random.Generator:
    """Independent, order-free RNG stream for one sample."""
    return np.random.default_rng(np.random.SeedSequence((int(seed), int(sample_id))))


def generate_dataset(config: SirConfig, n_samples: int) -> ObservationSet:
    """Simulate ``n_samples`` historical (weather, outage) observations.

    Each sample applies one shared coordinate jitter, uniform within
    +-0.05 and reflected into the unit square, to every region: the whole
    weather pattern shifts coherently from sample to sample, which is what
    makes the per-region observations spatially correlated.
    """
    if n_samples < 1:
        raise ValueError("n_samples must be at least 1")
    n = config.n
    W = np.empty((n_samples, n, 3))
    U = np.empty((n_samples, n))
    for j in range(n_samples):
        rng = sample_rng(config.seed, j)
        shift = rng.uniform(-0.05, 0.05, size=2)
        coords = _reflect_unit(config.coords + shift)
        w = weather_field(coords)
        beta = disruption_rates(w)
        traj = simulate_sir(config, beta)
        u = simulate_outages(config, traj, rng)
        W[j] = w
        U[j] = u
    return ObservationSet(W=W, U=U)


CLUSTER_RADIUS = 0.01


def default_config(n: int, seed: int = 0, chi: float = 0.1) -> SirConfig:
    """Populations uniform in [1000, 10000]; coordinates clustered.

    Region centers sit within a tight patch around a random point of the
    square: the service territory is small relative to the weather field,
    so all regions experience strongly correlated conditions and the
    per-sample jitter moves them coherently.
    """
    rng = np.random.default_rng(np.random.SeedSequence((int(seed), 0)))
    nu = rng.uniform(1000.0, 10000.0, size=n)
    center = rng.uniform(0.25, 0.75, size=2)
    coords = np.clip(
        center + rng.uniform(-CLUSTER_RADIUS, CLUSTER_RADIUS, size=(n, 2)), 0.0, 1.0
    )
    return SirConfig(n=n, nu=nu, coords=coords, chi=chi, seed=seed)
