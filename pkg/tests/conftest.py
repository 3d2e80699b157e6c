import numpy as np
import pytest

from resiplan.lp import LE, LinearProgram, solve_lp
from resiplan.model import Instance, UncertaintySet
from resiplan.simulator import SirConfig, simulate_sir


@pytest.fixture(scope="session", autouse=True)
def warm_kernels():
    """Trigger kernel compilation once so timed tests measure steady state."""
    lp = LinearProgram("max", [1.0], [([1.0], LE, 3.0)], var_bounds=[[0.0, 10.0]])
    solve_lp(lp)
    cfg = SirConfig(n=1, nu=np.array([1000.0]), coords=np.array([[0.5, 0.5]]))
    simulate_sir(cfg, np.array([0.3]))


def random_instance(rng, n=None, unit_c=True, h_low=0.3, h_high=3.0):
    """Compact-scale random planning instance in the style of the examples."""
    if n is None:
        n = int(rng.integers(3, 9))
    b = rng.uniform(1.0, 10.0, n)
    c = np.ones(n) if unit_c else rng.uniform(0.5, 3.0, n)
    h = rng.uniform(h_low, h_high, n)
    B = float(rng.uniform(0.2, 0.6) * b.sum())
    C = float(rng.integers(1, 3))
    return Instance(n=n, b=b, c=c, h=h, B=B, C=C)


def random_uncertainty(rng, n, alpha=0.1):
    """Random non-empty box-plus-budget set with a binding global row."""
    lo = rng.uniform(0.0, 3.0, n)
    hi = lo + rng.uniform(0.0, 5.0, n)
    g_lo = float(lo.sum() + rng.uniform(0.0, 0.3) * (hi.sum() - lo.sum()))
    g_hi = float(g_lo + rng.uniform(0.2, 0.9) * max(hi.sum() - g_lo, 1e-9))
    return UncertaintySet(
        local_lower=lo, local_upper=hi, global_lower=g_lo, global_upper=g_hi, alpha=alpha
    )
