"""Timing comparison: numba-compiled kernels vs the pure-numpy fallback.

Runs a fixed workload (batched recourse solves, a planning decomposition,
and dataset simulation) under the current backend and prints per-stage
seconds. With ``--both`` the script re-runs itself in two subprocesses,
one per backend, and prints a side-by-side table.

    python benchmarks/compare_backends.py --both
"""

import argparse
import json
import os
import subprocess
import sys
import time

import numpy as np


def run_workload():
    from resiplan._accel import backend_name
    from resiplan.bench import BenchConfig, build_case, calibrate
    from resiplan.conformal import build_uncertainty_set
    from resiplan.simulator import generate_dataset
    from resiplan.solver import benders_solve, recourse_lp

    timings = {"backend": backend_name()}

    # Warm-up (kernel compilation on the numba path).
    recourse_lp(np.ones(3), np.ones(3), 1.0)
    cfg_small = BenchConfig(n=4, seed=0, n_samples=20)
    _inst, sir = build_case(cfg_small)
    generate_dataset(sir, 3)

    rng = np.random.default_rng(0)
    t0 = time.perf_counter()
    for _ in range(400):
        n = int(rng.integers(5, 40))
        zeta = rng.uniform(0, 10, n)
        c = rng.uniform(0.5, 3, n)
        recourse_lp(zeta, c, float(rng.uniform(0, c.sum())))
    timings["recourse_lps_400"] = time.perf_counter() - t0

    cfg = BenchConfig(n=25, seed=1, n_samples=120, n_eval=20, train_fraction=0.8)
    inst, sir = build_case(cfg)
    t0 = time.perf_counter()
    data = generate_dataset(sir, cfg.n_samples)
    timings["simulate_120_samples"] = time.perf_counter() - t0

    hist = data.subset(range(100))
    _t, _c, model, scores = calibrate(hist, cfg)
    omega = build_uncertainty_set(model, scores, cfg.alpha, data.W[100])
    t0 = time.perf_counter()
    for _ in range(10):
        benders_solve(inst, omega, epsilon=1e-6)
    timings["planning_solves_10"] = time.perf_counter() - t0

    return timings


STAGES = ("recourse_lps_400", "simulate_120_samples", "planning_solves_10")


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--both", action="store_true",
                        help="compare numba and pure-numpy in subprocesses")
    parser.add_argument("--json", action="store_true",
                        help="emit raw json (used by --both subprocesses)")
    args = parser.parse_args(argv)

    if not args.both:
        timings = run_workload()
        if args.json:
            print(json.dumps(timings))
        else:
            print(f"backend: {timings['backend']}")
            for stage in STAGES:
                print(f"  {stage:<24s} {timings[stage]:8.3f}s")
        return 0

    results = {}
    for label, flag in (("numba", "0"), ("numpy", "1")):
        env = dict(os.environ)
        env["RESIPLAN_PURE_NUMPY"] = flag
        proc = subprocess.run(
            [sys.executable, os.path.abspath(__file__), "--json"],
            capture_output=True, text=True, env=env,
        )
        if proc.returncode != 0:
            print(proc.stderr, file=sys.stderr)
            return 1
        results[label] = json.loads(proc.stdout.strip().splitlines()[-1])

    print(f"{'stage':<24s} {'numba':>10s} {'numpy':>10s} {'speedup':>9s}")
    for stage in STAGES:
        fast = results["numba"][stage]
        slow = results["numpy"][stage]
        print(f"{stage:<24s} {fast:9.3f}s {slow:9.3f}s {slow / fast:8.1f}x")
    return 0


if __name__ == "__main__":
    sys.exit(main())
