import itertools

import numpy as np
import pytest

from resiplan.bench import (
    BenchConfig,
    Forecast,
    build_case,
    evaluate_recourse,
    make_forecast,
    plan_cooptimized,
    plan_proactive_only,
    run_benchmark,
    sensitivity_sweep,
)
from resiplan.conformal import ObservationSet
from resiplan.errors import CalibrationError
from resiplan.model import Instance, UncertaintySet, outage_cost


def inst_of(h, b=None, B=1.0, C=1.0, c=None):
    n = len(h)
    return Instance(
        n=n,
        b=np.ones(n) if b is None else b,
        c=np.ones(n) if c is None else c,
        h=h,
        B=B,
        C=C,
    )


class TestForecasts:
    def test_constant_history(self):
        ds = ObservationSet(W=np.zeros((5, 2, 1)), U=np.full((5, 2), 4.0))
        avg = make_forecast("empirical_average", data=ds)
        cons = make_forecast("empirical_conservative", data=ds)
        assert np.array_equal(avg.u_hat, [4.0, 4.0])
        assert np.array_equal(cons.u_hat, [4.0, 4.0])

    def test_two_sample_hand_arithmetic(self):
        ds = ObservationSet(W=np.zeros((2, 1, 1)), U=np.array([[0.0], [2.0]]))
        avg = make_forecast("empirical_average", data=ds)
        cons = make_forecast("empirical_conservative", data=ds)
        assert avg.u_hat[0] == pytest.approx(1.0)
        assert cons.u_hat[0] == pytest.approx(1.0 + 1.96 * np.sqrt(2.0))

    def test_conservative_needs_two(self):
        ds = ObservationSet(W=np.zeros((1, 1, 1)), U=np.array([[1.0]]))
        with pytest.raises(CalibrationError):
            make_forecast("empirical_conservative", data=ds)

    def test_conformal_conservative_is_local_upper(self):
        om = UncertaintySet([1.0, 2.0], [4.0, 6.0], 3.0, 10.0, 0.1)
        fc = make_forecast("conformal_conservative", omega=om)
        assert np.array_equal(fc.u_hat, om.local_upper)

    def test_unknown_method(self):
        with pytest.raises(ValueError):
            make_forecast("nope")


class TestProactivePlanner:
    def test_zero_budget(self):
        inst = inst_of([1.0, 2.0], B=0.0)
        x = plan_proactive_only(inst, Forecast(u_hat=np.ones(2), method="empirical_average"))
        assert np.array_equal(x, [0.0, 0.0])

    def test_prefers_largest_value(self):
        inst = inst_of([10.0, 1.0], B=1.0)
        x = plan_proactive_only(inst, Forecast(u_hat=np.ones(2), method="empirical_average"))
        assert np.array_equal(x, [1.0, 0.0])

    def test_zero_forecast_returns_zero_plan(self):
        inst = inst_of([3.0, 5.0], B=2.0)
        x = plan_proactive_only(inst, Forecast(u_hat=np.zeros(2), method="empirical_average"))
        assert np.array_equal(x, [0.0, 0.0])

    def test_ranking_invariance(self):
        # Forecasts with the same ranking of h*u give the same actions.
        rng = np.random.default_rng(0)
        for _ in range(20):
            n = 6
            h = rng.uniform(1, 5, n)
            inst = inst_of(h, b=rng.uniform(1, 3, n), B=4.0)
            base = rng.uniform(0.5, 4, n)
            x1 = plan_proactive_only(inst, Forecast(u_hat=base, method="empirical_average"))
            x2 = plan_proactive_only(
                inst, Forecast(u_hat=2.5 * base, method="empirical_conservative")
            )
            assert np.array_equal(x1, x2)


class TestCooptimizedPlanner:
    def brute(self, inst, u_hat):
        """Exhaustive minimum over all budget-feasible (x, y) pairs."""
        n = inst.n
        patterns = np.array(list(itertools.product([0.0, 1.0], repeat=n)))
        xs = patterns[patterns @ inst.b <= inst.B + 1e-12]
        ys = patterns[patterns @ inst.c <= inst.C + 1e-12]
        weights = inst.h * u_hat
        vals = ((1.0 - xs) * weights) @ (1.0 - ys).T  # (n_x, n_y)
        return None, float(vals.min())

    def test_full_reactive_budget_free(self):
        n = 4
        inst = inst_of(np.ones(n) * 2.0, B=1.0, C=float(n))
        x, y = plan_cooptimized(inst, Forecast(u_hat=np.ones(n), method="empirical_average"))
        val = float(np.sum(inst.h * 1.0 * (1 - x) * (1 - y)))
        assert val == pytest.approx(0.0, abs=1e-9)

    def test_three_region_example(self):
        inst = inst_of([9.0, 5.0, 1.0], B=1.0, C=1.0)
        fc = Forecast(u_hat=np.ones(3), method="empirical_average")
        x, y = plan_cooptimized(inst, fc)
        val = float(np.sum(inst.h * (1 - x) * (1 - y)))
        assert val == pytest.approx(1.0, abs=1e-9)
        assert x[0] + y[0] >= 1.0 and x[1] + y[1] >= 1.0

    def test_matches_brute_force(self):
        rng = np.random.default_rng(7)
        for _ in range(60):
            n = int(rng.integers(2, 9))
            inst = inst_of(
                rng.uniform(0.5, 5, n),
                b=rng.uniform(0.5, 2, n),
                B=float(rng.uniform(0, 4)),
                C=float(rng.integers(0, 3)),
                c=np.ones(n),
            )
            u_hat = rng.uniform(0, 4, n)
            x, y = plan_cooptimized(inst, Forecast(u_hat=u_hat, method="empirical_average"))
            val = float(np.sum(inst.h * u_hat * (1 - x) * (1 - y)))
            _, ref = self.brute(inst, u_hat)
            assert val == pytest.approx(ref, abs=1e-8)


class TestEvaluateRecourse:
    def test_zero_outages(self):
        inst = inst_of([1.0, 2.0])
        assert evaluate_recourse(inst, [0.0, 0.0], [0.0, 0.0], [0.0, 0.0]) == 0.0

    def test_matches_outage_cost(self):
        rng = np.random.default_rng(3)
        inst = inst_of(rng.uniform(1, 4, 5))
        x = (rng.random(5) < 0.5).astype(float)
        y = (rng.random(5) < 0.5).astype(float)
        u = rng.uniform(0, 3, 5)
        assert evaluate_recourse(inst, x, y, u) == outage_cost(inst, x, u, y)

    def test_reoptimized_recourse_never_worse(self):
        rng = np.random.default_rng(4)
        for _ in range(30):
            n = 5
            inst = inst_of(rng.uniform(1, 4, n), C=1.0)
            x = (rng.random(n) < 0.4).astype(float)
            y_fix = np.zeros(n)
            y_fix[int(rng.integers(0, n))] = 1.0
            u = rng.uniform(0, 3, n)
            assert evaluate_recourse(inst, x, None, u) <= evaluate_recourse(inst, x, y_fix, u) + 1e-12


def small_bench_config(**kw):
    defaults = dict(n=5, seed=3, n_samples=40, n_eval=6, train_fraction=0.7,
                    proactive_budget=900.0)
    defaults.update(kw)
    return BenchConfig(**defaults)


class TestRunBenchmark:
    def test_structure_and_dominance(self):
        cfg = small_bench_config()
        rep = run_benchmark(cfg)
        planners = {r[0] for r in rep.raw}
        assert planners == {"proactive_only", "cooptimized", "trilevel"}
        # row count: one worst-case row per planner entry, variant, sample
        # plus one recourse row per cooptimized/trilevel entry, variant, sample
        summary = rep.summary()
        wc_entries = {(p, f) for p, f, c, v, _m, _n in summary if c == "worst_case"}
        rc_entries = {(p, f) for p, f, c, v, _m, _n in summary if c == "recourse"}
        assert len(rep.raw) == (len(wc_entries) * 3 + len(rc_entries) * 3) * cfg.n_eval
        # per-sample dominance of the worst-case planner on the full variant
        tri = {
            s: v
            for p, f, c, var, s, v in rep.raw
            if p == "trilevel" and c == "worst_case" and var == "full"
        }
        for p, f, c, var, s, v in rep.raw:
            if c == "worst_case" and var == "full" and p != "trilevel":
                assert v >= tri[s] - 1e-6

    def test_deterministic_reports(self):
        cfg = small_bench_config()
        a = run_benchmark(cfg)
        b = run_benchmark(cfg)
        assert a.cells_csv() == b.cells_csv()
        assert a.summary_csv() == b.summary_csv()
        assert a.table_csv("worst_case") == b.table_csv("worst_case")

    def test_summary_means_match_raw(self):
        rep = run_benchmark(small_bench_config())
        for planner, forecast, criterion, variant, mean, count in rep.summary():
            vals = [
                v
                for p, f, c, var, _s, v in rep.raw
                if (p, f, c, var) == (planner, forecast, criterion, variant)
            ]
            assert count == len(vals)
            assert mean == pytest.approx(float(np.mean(vals)), abs=1e-12)

    def test_table_layout(self):
        rep = run_benchmark(small_bench_config())
        head = rep.table_csv("worst_case").splitlines()[0]
        assert head == "planner,forecast,local_only,global_only,full"
        head2 = rep.table_csv("recourse").splitlines()[0]
        assert head2 == "planner,forecast,eta,eta_plus_sigma,eta_plus_2sigma"

    def test_fixed_recourse_mode_runs(self):
        rep = run_benchmark(small_bench_config(trilevel_recourse="fixed"))
        assert any(p == "trilevel" and c == "recourse" for p, f, c, v, s, val in rep.raw)


class TestSweep:
    def test_b_sweep_structure_and_dominance(self):
        cfg = small_bench_config(n_eval=4)
        sweep = sensitivity_sweep("B", [500.0, 1000.0, 2000.0], cfg)
        assert len(sweep.reports) == 3
        assert all(d[5] >= -1e-6 for d in sweep.diffs if d[3] == "full")
        # trilevel mean worst-case value is non-increasing in the budget
        tri_means = []
        for rep in sweep.reports:
            for p, f, c, v, mean, _n in rep.summary():
                if p == "trilevel" and c == "worst_case" and v == "full":
                    tri_means.append(mean)
        assert all(tri_means[k + 1] <= tri_means[k] + 1e-6 for k in range(2))

    def test_sweep_csv_headers(self):
        cfg = small_bench_config(n_eval=3)
        sweep = sensitivity_sweep("C", [1.0, 2.0], cfg)
        assert sweep.diffs_csv().splitlines()[0] == (
            "param_value,planner,forecast,variant,sample_id,diff_vs_trilevel"
        )
        assert sweep.timings_csv().splitlines()[0] == (
            "param_value,sample_id,wall_clock_s,final_gap,iterations"
        )
        assert sweep.cells_csv().splitlines()[0] == (
            "param_value,planner,forecast,criterion,variant,sample_id,value"
        )

    def test_unknown_parameter(self):
        with pytest.raises(ValueError):
            sensitivity_sweep("bogus", [1.0], small_bench_config())

    def test_converged_gaps_within_tolerance(self):
        cfg = small_bench_config(n_eval=4)
        rep = run_benchmark(cfg)
        for _s, _w, gap, _it in rep.timings:
            assert gap <= cfg.epsilon + 1e-9


def test_build_case_deterministic():
    cfg = small_bench_config()
    i1, s1 = build_case(cfg)
    i2, s2 = build_case(cfg)
    assert np.array_equal(i1.b, i2.b)
    assert np.array_equal(i1.h, i2.h)
    assert np.array_equal(s1.coords, s2.coords)
    assert np.array_equal(i1.h, 1.0 * np.asarray(s1.nu))
