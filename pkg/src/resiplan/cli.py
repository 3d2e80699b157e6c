"""Command-line entry point.

Subcommands wire dataset generation, calibration, planning, evaluation,
benchmarking, and parameter sweeps into reproducible runs: every command is
a pure function of its configuration and seed, and all primary output files
are written atomically and byte-identical across reruns. Wall-clock timing
goes into separate ``*_timing`` files so the deterministic outputs stay
comparable.

Exit codes: 0 success, 1 usage error, 2 iteration limit reached,
3 infeasible input, 4 oracle cross-check mismatch.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import tempfile
import time
from dataclasses import dataclass, fields

import numpy as np

from . import bench as bench_mod
from .bench import BenchConfig, build_case, calibrate, run_benchmark, sensitivity_sweep
from .conformal import ObservationSet, build_uncertainty_set
from .errors import CalibrationError, CoverageError, DataError, DimensionError
from .model import Instance
from .simulator import SirConfig, generate_dataset
from .solver import STATUS_CONVERGED, benders_solve, enumerate_solve, worst_case_value

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_ITERATION_LIMIT = 2
EXIT_INFEASIBLE = 3
EXIT_ORACLE_MISMATCH = 4


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # argparse defaults to exit code 2
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def atomic_write(path: str, text: str) -> None:
    """Write via a temp file and rename, so files are never half-written."""
    directory = os.path.dirname(os.path.abspath(path)) or "."
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp_resiplan_")
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


@dataclass
class RunConfig:
    """CLI configuration; JSON file values are overridden by flags."""

    n: int = 10
    seed: int = 0
    alpha: float = 0.1
    epsilon: float = 1e-6
    epsilon_rel: float = 0.0
    max_iter: int = 200
    cut_mode: str = "both"
    n_samples: int = 200
    n_eval: int = 40
    train_fraction: float = 0.9
    chi: float = 0.1
    proactive_budget: float = 1000.0
    reactive_budget: float = 1.0
    b_low: float = 100.0
    b_high: float = 1000.0
    h_scale: float = 1.0
    out_dir: str = "."
    instance_file: str = ""
    dataset_file: str = ""

    def __post_init__(self):
        if not 0.0 < self.alpha < 1.0:
            raise ValueError("alpha must lie in (0, 1)")
        if self.epsilon < 0.0:
            raise ValueError("epsilon must be nonnegative")
        if self.max_iter < 1:
            raise ValueError("max_iter must be at least 1")

    @classmethod
    def from_sources(cls, config_path, overrides) -> "RunConfig":
        values = {}
        if config_path:
            with open(config_path, "r", encoding="utf-8") as fh:
                data = json.load(fh)
            known = {f.name for f in fields(cls)}
            unknown = set(data) - known
            if unknown:
                raise DataError(f"unknown config keys: {sorted(unknown)}")
            values.update(data)
        values.update({k: v for k, v in overrides.items() if v is not None})
        return cls(**values)

    def bench_config(self) -> BenchConfig:
        return BenchConfig(
            n=self.n,
            seed=self.seed,
            n_samples=self.n_samples,
            n_eval=self.n_eval,
            alpha=self.alpha,
            train_fraction=self.train_fraction,
            proactive_budget=self.proactive_budget,
            reactive_budget=self.reactive_budget,
            b_low=self.b_low,
            b_high=self.b_high,
            h_scale=self.h_scale,
            chi=self.chi,
            epsilon=self.epsilon,
            epsilon_rel=self.epsilon_rel,
            max_iter=self.max_iter,
            cut_mode=self.cut_mode,
        )


def _add_common_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="JSON config file; flags override its values")
    p.add_argument("--n", type=int, help="number of regions")
    p.add_argument("--seed", type=int, help="master seed")
    p.add_argument("--alpha", type=float, help="miscoverage level in (0,1)")
    p.add_argument("--epsilon", type=float, help="absolute bound-gap tolerance")
    p.add_argument("--epsilon-rel", type=float, dest="epsilon_rel",
                   help="relative bound-gap tolerance")
    p.add_argument("--max-iter", type=int, dest="max_iter", help="iteration limit")
    p.add_argument("--cut-mode", dest="cut_mode",
                   choices=["subgradient", "nogood", "both"], help="optimality cut portfolio")
    p.add_argument("--n-samples", type=int, dest="n_samples", help="simulated sample count")
    p.add_argument("--n-eval", type=int, dest="n_eval", help="held-out evaluation samples")
    p.add_argument("--train-fraction", type=float, dest="train_fraction",
                   help="training share of the historical split")
    p.add_argument("--chi", type=float, help="observation noise scale")
    p.add_argument("--budget-proactive", type=float, dest="proactive_budget",
                   help="proactive budget B")
    p.add_argument("--budget-reactive", type=float, dest="reactive_budget",
                   help="reactive budget C")
    p.add_argument("--out-dir", dest="out_dir", help="output directory")
    p.add_argument("--instance", dest="instance_file", help="instance JSON path")
    p.add_argument("--dataset", dest="dataset_file", help="dataset CSV path")


def _config_from_args(args) -> RunConfig:
    overrides = {
        k: getattr(args, k, None)
        for k in (
            "n", "seed", "alpha", "epsilon", "epsilon_rel", "max_iter", "cut_mode",
            "n_samples", "n_eval", "train_fraction", "chi", "proactive_budget",
            "reactive_budget", "out_dir", "instance_file", "dataset_file",
        )
    }
    return RunConfig.from_sources(args.config, overrides)


def _out(cfg: RunConfig, name: str) -> str:
    os.makedirs(cfg.out_dir, exist_ok=True)
    return os.path.join(cfg.out_dir, name)


def _load_or_build(cfg: RunConfig):
    """Instance and dataset from files when given, else regenerated from seed."""
    bc = cfg.bench_config()
    inst, sir = build_case(bc)
    if cfg.instance_file:
        inst = Instance.load(cfg.instance_file)
    if cfg.dataset_file:
        data = ObservationSet.load(cfg.dataset_file)
    else:
        data = generate_dataset(sir, cfg.n_samples)
    return bc, inst, data


def cmd_generate(args) -> int:
    cfg = _config_from_args(args)
    bc = cfg.bench_config()
    inst, sir = build_case(bc)
    if args.sir_config:
        sir = SirConfig.load(args.sir_config)
        if sir.n != inst.n:
            raise DataError(
                f"simulator config has {sir.n} regions but the instance has {inst.n}; "
                "pass a matching --n"
            )
    data = generate_dataset(sir, cfg.n_samples)
    dataset_path = _out(cfg, "dataset.csv")
    atomic_write(dataset_path, data.to_csv())
    instance_path = _out(cfg, "instance.json")
    atomic_write(instance_path, inst.to_json())
    atomic_write(_out(cfg, "sir_config.json"), sir.to_json())
    print(f"wrote {dataset_path} ({len(data)} samples x {data.n} regions x {data.p} features)")
    print(f"wrote {instance_path}")
    print(
        "outage mean {:.4f} min {:.4f} max {:.4f}".format(
            float(data.U.mean()), float(data.U.min()), float(data.U.max())
        )
    )
    return EXIT_OK


def _calibrated_omega(cfg: RunConfig, data: ObservationSet, target: str):
    bc = cfg.bench_config()
    n_hist = min(len(data), cfg.n_samples) - cfg.n_eval
    if n_hist < 4:
        raise CalibrationError("not enough samples for a history/evaluation split")
    hist = data.subset(range(n_hist))
    _train, _cal, model, scores = calibrate(hist, bc)
    if target == "mean":
        w = data.W[:n_hist].mean(axis=0)
    else:
        w = data.W[int(target)]
    return build_uncertainty_set(model, scores, cfg.alpha, w), model, scores


def cmd_calibrate(args) -> int:
    cfg = _config_from_args(args)
    _bc, _inst, data = _load_or_build(cfg)
    omega, _model, _scores = _calibrated_omega(cfg, data, args.target)
    path = _out(cfg, "uncertainty.json")
    atomic_write(path, omega.to_json())
    print(f"wrote {path}")
    print(
        "local width mean {:.4f}; global interval [{:.4f}, {:.4f}]".format(
            float(np.mean(omega.local_upper - omega.local_lower)),
            omega.global_lower,
            omega.global_upper,
        )
    )
    return EXIT_OK


def cmd_plan(args) -> int:
    cfg = _config_from_args(args)
    _bc, inst, data = _load_or_build(cfg)
    omega, _model, _scores = _calibrated_omega(cfg, data, args.target)
    t0 = time.perf_counter()
    plan = benders_solve(
        inst,
        omega,
        epsilon=cfg.epsilon,
        max_iter=cfg.max_iter,
        cut_mode=cfg.cut_mode,
        epsilon_rel=cfg.epsilon_rel,
    )
    wall = time.perf_counter() - t0
    atomic_write(_out(cfg, "plan.json"), plan.to_json())
    atomic_write(_out(cfg, "plan_trace.csv"), plan.trace_csv())
    atomic_write(
        _out(cfg, "plan_timing.csv"),
        "wall_clock_s,final_gap,iterations\n"
        f"{wall!r},{plan.final_gap!r},{plan.iterations}\n",
    )
    print(f"plan x = {[int(v) for v in plan.x]}")
    print(f"certified worst-case cost = {plan.value!r}")
    print(f"status = {plan.status} after {plan.iterations} iterations, gap {plan.final_gap!r}")
    if args.oracle:
        ref = enumerate_solve(inst, omega)
        if abs(ref.value - plan.value) > 1e-6:
            print(
                f"oracle mismatch: enumeration found {ref.value!r}, plan certified {plan.value!r}",
                file=sys.stderr,
            )
            return EXIT_ORACLE_MISMATCH
        print(f"oracle agrees: {ref.value!r}")
    if plan.status != STATUS_CONVERGED:
        return EXIT_ITERATION_LIMIT
    return EXIT_OK


def cmd_evaluate(args) -> int:
    cfg = _config_from_args(args)
    _bc, inst, data = _load_or_build(cfg)
    omega, _model, _scores = _calibrated_omega(cfg, data, args.target)
    with open(args.plan, "r", encoding="utf-8") as fh:
        plan = json.load(fh)
    x = np.asarray(plan["x"], dtype=float)
    lines = ["variant,value"]
    for variant in ("local_only", "global_only", "full"):
        val = worst_case_value(x, omega, inst, variant=variant)
        lines.append(f"{variant},{val!r}")
        print(f"worst case ({variant}): {val!r}")
    atomic_write(_out(cfg, "evaluation.csv"), "\n".join(lines) + "\n")
    return EXIT_OK


def cmd_bench(args) -> int:
    cfg = _config_from_args(args)
    report = run_benchmark(cfg.bench_config())
    atomic_write(_out(cfg, "bench_cells.csv"), report.cells_csv())
    atomic_write(_out(cfg, "bench_summary.csv"), report.summary_csv())
    atomic_write(
        _out(cfg, "bench_worst_case.csv"), report.table_csv(bench_mod.CRITERION_WORST_CASE)
    )
    atomic_write(
        _out(cfg, "bench_recourse.csv"), report.table_csv(bench_mod.CRITERION_RECOURSE)
    )
    atomic_write(_out(cfg, "bench_timing.csv"), report.timings_csv())
    print(report.table_csv(bench_mod.CRITERION_WORST_CASE))
    print(f"wrote bench_cells.csv, bench_summary.csv, bench_worst_case.csv,")
    print(f"      bench_recourse.csv, bench_timing.csv in {cfg.out_dir}")
    return EXIT_OK


def cmd_sweep(args) -> int:
    cfg = _config_from_args(args)
    grid = [float(v) for v in args.grid.split(",") if v.strip() != ""]
    if not grid:
        raise ValueError("empty sweep grid")
    sweep = sensitivity_sweep(args.parameter, grid, cfg.bench_config())
    atomic_write(_out(cfg, "sweep_cells.csv"), sweep.cells_csv())
    atomic_write(_out(cfg, "sweep_diffs.csv"), sweep.diffs_csv())
    atomic_write(_out(cfg, "sweep_timing.csv"), sweep.timings_csv())
    print(f"swept {args.parameter} over {grid}")
    print(f"wrote sweep_cells.csv, sweep_diffs.csv, sweep_timing.csv in {cfg.out_dir}")
    return EXIT_OK


def build_parser() -> _Parser:
    parser = _Parser(
        prog="resiplan",
        description=(
            "Plan budget-constrained proactive hardening for a multi-region "
            "electricity system, robust to worst-case outages drawn from "
            "calibrated uncertainty sets."
        ),
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="simulate a historical observation dataset")
    _add_common_flags(p)
    p.add_argument("--sir-config", dest="sir_config",
                   help="simulator configuration JSON (overrides the seeded default)")
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("calibrate", help="build the uncertainty set from a dataset")
    _add_common_flags(p)
    p.add_argument("--target", default="mean",
                   help="feature matrix to calibrate at: 'mean' or a sample index")
    p.set_defaults(func=cmd_calibrate)

    p = sub.add_parser("plan", help="solve for the robust proactive plan")
    _add_common_flags(p)
    p.add_argument("--target", default="mean",
                   help="feature matrix to calibrate at: 'mean' or a sample index")
    p.add_argument("--oracle", action="store_true",
                   help="cross-check the plan against exhaustive enumeration")
    p.set_defaults(func=cmd_plan)

    p = sub.add_parser("evaluate", help="score a saved plan under the uncertainty variants")
    _add_common_flags(p)
    p.add_argument("--plan", required=True, help="plan JSON produced by the plan command")
    p.add_argument("--target", default="mean",
                   help="feature matrix to calibrate at: 'mean' or a sample index")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("bench", help="run the full planner comparison")
    _add_common_flags(p)
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("sweep", help="re-run the benchmark along a parameter grid")
    _add_common_flags(p)
    p.add_argument("--parameter", required=True, choices=["chi", "n", "B", "C"])
    p.add_argument("--grid", required=True, help="comma-separated grid values")
    p.set_defaults(func=cmd_sweep)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (DimensionError, DataError, CalibrationError, CoverageError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
