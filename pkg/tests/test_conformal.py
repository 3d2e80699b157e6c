import math

import numpy as np
import pytest

from resiplan.conformal import (
    ObservationSet,
    build_uncertainty_set,
    conformal_quantile,
    empirical_coverage,
    fit_regressor,
    nonconformity_scores,
    predict,
    split_observations,
    Regressor,
    CalibrationScores,
    _repair_global_interval,
)
from resiplan.errors import CalibrationError, CoverageError, DataError, DimensionError
from resiplan.simulator import default_config, generate_dataset


def linear_dataset(m=50, n=3, p=3, seed=0, noise=0.0):
    """Targets exactly linear in each region's own features (plus offset)."""
    rng = np.random.default_rng(seed)
    A = rng.uniform(0.5, 2.0, (n, p))
    const = rng.uniform(5.0, 10.0, n)
    W = rng.uniform(0.0, 4.0, (m, n, p))
    U = np.einsum("ip,mip->mi", A, W) + const
    if noise:
        U = U + rng.normal(0.0, noise, U.shape)
    return ObservationSet(W=W, U=np.maximum(U, 0.0)), A, const


class TestSplit:
    def test_half_split(self):
        ds, _, _ = linear_dataset(m=160)
        train, cal = split_observations(ds, 0.5, seed=0)
        assert len(train) == 80 and len(cal) == 80

    def test_deterministic(self):
        ds, _, _ = linear_dataset(m=40)
        a1, b1 = split_observations(ds, 0.7, seed=3)
        a2, b2 = split_observations(ds, 0.7, seed=3)
        assert np.array_equal(a1.U, a2.U) and np.array_equal(b1.U, b2.U)

    def test_paper_sized_split(self):
        ds, _, _ = linear_dataset(m=200)
        train, cal = split_observations(ds, 0.8, seed=0)
        assert len(train) == 160 and len(cal) == 40

    def test_disjoint_union(self):
        ds, _, _ = linear_dataset(m=24)
        train, cal = split_observations(ds, 0.6, seed=1)
        combined = np.vstack([train.U, cal.U])
        assert combined.shape[0] == 24
        # every original row appears exactly once across the two parts
        orig = {tuple(row) for row in ds.U}
        assert {tuple(row) for row in combined} == orig

    def test_too_small(self):
        ds, _, _ = linear_dataset(m=3)
        with pytest.raises(CalibrationError):
            split_observations(ds, 0.5, seed=0)


class TestRegressor:
    def test_constant_target(self):
        ds, _, _ = linear_dataset(m=30)
        U = np.full_like(ds.U, 7.5)
        const_ds = ObservationSet(W=ds.W, U=U)
        model = fit_regressor(const_ds)
        pred = predict(model, ds.W[0])
        assert pred == pytest.approx(np.full(ds.n, 7.5), abs=1e-6)

    def test_recovers_linear_generator(self):
        ds, A, const = linear_dataset(m=60, seed=4)
        model = fit_regressor(ds, ridge=1e-8)
        assert model.coef[:, 1:] == pytest.approx(A, abs=1e-6)
        assert model.coef[:, 0] == pytest.approx(const, abs=1e-6)

    def test_training_residual_tiny(self):
        ds, _, _ = linear_dataset(m=60, seed=4)
        model = fit_regressor(ds, ridge=1e-8)
        for j in range(5):
            assert predict(model, ds.W[j]) == pytest.approx(ds.U[j], abs=1e-6)

    def test_zero_coefficients_predict_zero(self):
        model = Regressor(coef=np.zeros((4, 4)))
        assert np.array_equal(predict(model, np.ones((4, 3))), np.zeros(4))

    def test_dot_product_identity(self):
        rng = np.random.default_rng(8)
        coef = rng.normal(0, 1, (3, 4))
        model = Regressor(coef=coef)
        w = rng.normal(0, 1, (3, 3))
        manual = np.maximum(coef[:, 0] + (w * coef[:, 1:]).sum(axis=1), 0.0)
        assert predict(model, w) == pytest.approx(manual, abs=1e-12)

    def test_prediction_clipped_at_zero(self):
        model = Regressor(coef=np.array([[-5.0, 0.0, 0.0, 0.0]]))
        assert predict(model, np.zeros((1, 3)))[0] == 0.0

    def test_rank_deficient_design_survives(self):
        rng = np.random.default_rng(1)
        W = np.repeat(rng.uniform(0, 1, (20, 2, 1)), 3, axis=2)  # collinear features
        U = rng.uniform(0, 2, (20, 2))
        model = fit_regressor(ObservationSet(W=W, U=U))
        assert np.all(np.isfinite(model.coef))

    def test_nonfinite_features_rejected(self):
        ds, _, _ = linear_dataset(m=20)
        W = ds.W.copy()
        W[0, 0, 0] = np.nan
        with pytest.raises(DataError):
            fit_regressor(ObservationSet(W=W, U=ds.U))

    def test_too_few_samples(self):
        ds, _, _ = linear_dataset(m=4, p=3)
        with pytest.raises(CalibrationError):
            fit_regressor(ds)

    def test_shape_mismatch_on_predict(self):
        ds, _, _ = linear_dataset(m=20)
        model = fit_regressor(ds)
        with pytest.raises(DimensionError):
            predict(model, np.zeros((ds.n, ds.p + 1)))


class TestScores:
    def test_perfect_predictions_zero_scores(self):
        ds, _, _ = linear_dataset(m=40, seed=2)
        model = fit_regressor(ds, ridge=1e-10)
        scores = nonconformity_scores(model, ds)
        assert np.max(scores.local) < 1e-6
        assert np.max(scores.pooled) < 1e-5

    def test_cancellation_in_pooled_score(self):
        # Residuals (+3, -3): local scores are 3 and 3, pooled score is 0.
        model = Regressor(coef=np.array([[5.0, 0.0], [5.0, 0.0]]))
        cal = ObservationSet(W=np.zeros((1, 2, 1)), U=np.array([[8.0, 2.0]]))
        scores = nonconformity_scores(model, cal)
        assert scores.local[:, 0] == pytest.approx([3.0, 3.0])
        assert scores.pooled[0] == pytest.approx(0.0)

    def test_matches_naive_double_loop(self):
        ds, _, _ = linear_dataset(m=25, seed=6, noise=0.5)
        model = fit_regressor(ds)
        scores = nonconformity_scores(model, ds)
        for j in range(len(ds)):
            pred = predict(model, ds.W[j])
            total = 0.0
            for i in range(ds.n):
                assert scores.local[i, j] == abs(ds.U[j, i] - pred[i])
                total += ds.U[j, i] - pred[i]
            assert scores.pooled[j] == abs(total)


class TestQuantile:
    def test_order_statistic(self):
        assert conformal_quantile(np.arange(1.0, 11.0), 0.5) == 6.0

    def test_all_equal(self):
        assert conformal_quantile(np.full(17, 3.25), 0.1) == 3.25

    def test_sentinel(self):
        assert conformal_quantile(np.arange(1.0, 11.0), 0.05) == math.inf

    def test_floating_point_boundary(self):
        # (m+1)(1-alpha) = 9 exactly in real arithmetic: index must be 9.
        scores = np.arange(1.0, 10.0)  # m = 9
        assert conformal_quantile(scores, 0.1) == 9.0

    def test_empty_rejected(self):
        with pytest.raises(CalibrationError):
            conformal_quantile([], 0.1)

    def test_permutation_invariant(self):
        rng = np.random.default_rng(0)
        s = rng.uniform(0, 5, 37)
        q = conformal_quantile(s, 0.2)
        for _ in range(5):
            assert conformal_quantile(rng.permutation(s), 0.2) == q


class TestBuildSet:
    def test_zero_quantiles_degenerate(self):
        model = Regressor(coef=np.array([[5.0, 0.0]]))
        scores = CalibrationScores(local=np.zeros((1, 30)), pooled=np.zeros(30))
        om = build_uncertainty_set(model, scores, 0.1, np.zeros((1, 1)))
        assert om.local_lower[0] == om.local_upper[0] == 5.0
        assert om.global_lower == om.global_upper == 5.0

    def test_hand_arithmetic(self):
        model = Regressor(coef=np.array([[5.0, 0.0]]))
        scores = CalibrationScores(local=np.full((1, 99), 2.0), pooled=np.full(99, 1.0))
        om = build_uncertainty_set(model, scores, 0.1, np.zeros((1, 1)))
        assert (om.local_lower[0], om.local_upper[0]) == (3.0, 7.0)
        assert (om.global_lower, om.global_upper) == (4.0, 6.0)

    def test_clipping_at_zero(self):
        model = Regressor(coef=np.array([[1.0, 0.0]]))
        scores = CalibrationScores(local=np.full((1, 99), 5.0), pooled=np.full(99, 0.5))
        om = build_uncertainty_set(model, scores, 0.1, np.zeros((1, 1)))
        assert om.local_lower[0] == 0.0

    def test_sentinel_raises_coverage_error(self):
        model = Regressor(coef=np.array([[5.0, 0.0]]))
        scores = CalibrationScores(local=np.full((1, 5), 1.0), pooled=np.full(5, 1.0))
        with pytest.raises(CoverageError, match="alpha=0.01"):
            build_uncertainty_set(model, scores, 0.01, np.zeros((1, 1)))

    def test_widening_monotone_in_alpha(self):
        ds = generate_dataset(default_config(5, seed=1), 80)
        train, cal = split_observations(ds, 0.5, seed=1)
        model = fit_regressor(train)
        scores = nonconformity_scores(model, cal)
        w = ds.W[0]
        wide = build_uncertainty_set(model, scores, 0.05, w)
        narrow = build_uncertainty_set(model, scores, 0.3, w)
        assert np.all(wide.local_lower <= narrow.local_lower + 1e-12)
        assert np.all(wide.local_upper >= narrow.local_upper - 1e-12)
        assert wide.global_lower <= narrow.global_lower + 1e-12
        assert wide.global_upper >= narrow.global_upper - 1e-12

    def test_repair_widens_and_warns(self):
        with pytest.warns(UserWarning):
            g_lo, g_hi = _repair_global_interval(
                np.array([1.0, 1.0]), np.array([2.0, 2.0]), 9.0, 11.0
            )
        assert g_lo == 4.0 and g_hi == 11.0


class TestCoverage:
    def test_coverage_on_calibration_data(self):
        # Per event, at least ceil((m+1)*0.9) of the m calibration scores sit
        # at or below their own quantile; with m=32 that is 30/32. The joint
        # rate depends on which samples each event excludes; seed 0 keeps
        # them aligned and reaches the per-event rate exactly.
        ds = generate_dataset(default_config(10, seed=0), 160)
        train, cal = split_observations(ds, 0.8, seed=0)
        model = fit_regressor(train)
        scores = nonconformity_scores(model, cal)
        local, global_rate, joint = empirical_coverage(model, scores, 0.1, cal)
        assert np.all(local >= 30.0 / 32.0)
        assert global_rate >= 30.0 / 32.0
        assert joint >= 0.9

    def test_tiny_alpha_covers_everything(self):
        ds = generate_dataset(default_config(4, seed=7), 400)
        train, cal = split_observations(ds, 0.5, seed=7)
        model = fit_regressor(train)
        scores = nonconformity_scores(model, cal)
        local, global_rate, joint = empirical_coverage(model, scores, 0.005, cal)
        assert joint == 1.0 and global_rate == 1.0

    def test_fresh_test_global_coverage(self):
        cfg = default_config(10, seed=11)
        ds = generate_dataset(cfg, 400)
        hist = ds.subset(range(200))
        test = ds.subset(range(200, 400))
        train, cal = split_observations(hist, 0.8, seed=11)
        model = fit_regressor(train)
        scores = nonconformity_scores(model, cal)
        _, global_rate, _ = empirical_coverage(model, scores, 0.1, test)
        assert global_rate >= 0.85

    def test_exchangeability_mean_global_coverage(self):
        # Mean global coverage over many independent (train, cal, test)
        # draws stays within Monte-Carlo slack of the nominal level.
        alpha = 0.1
        rates = []
        for rep in range(200):
            ds = generate_dataset(default_config(6, seed=10_000 + rep), 120)
            hist = ds.subset(range(90))
            test = ds.subset(range(90, 120))
            train, cal = split_observations(hist, 0.8, seed=rep)
            model = fit_regressor(train)
            scores = nonconformity_scores(model, cal)
            _, global_rate, _ = empirical_coverage(model, scores, alpha, test)
            rates.append(global_rate)
        assert float(np.mean(rates)) >= 1.0 - alpha - 0.03


class TestObservationCsv:
    def test_round_trip(self):
        ds = generate_dataset(default_config(4, seed=9), 12)
        back = ObservationSet.from_csv(ds.to_csv())
        assert np.array_equal(back.W, ds.W)
        assert np.array_equal(back.U, ds.U)

    def test_header_shape(self):
        ds, _, _ = linear_dataset(m=3, n=2, p=3)
        lines = ds.to_csv().splitlines()
        assert lines[0] == "sample_id,region_id,u,f1,f2,f3"
        assert len(lines) == 1 + 3 * 2

    def test_bad_header_rejected(self):
        with pytest.raises(DataError):
            ObservationSet.from_csv("a,b,c\n1,2,3\n")
