"""Feature construction, ridge fitting, and MSE evaluation."""

import numpy as np
import pytest

from reviewgrid.grid import GridLayout
from reviewgrid.rating import (
    baseline_global_mean,
    build_features,
    build_feature_matrix,
    evaluate_mse,
    fit_ridge,
    predict,
    write_predictions_tsv,
)

import oracles
from conftest import build_params


class TestBuildFeatures:
    def test_concatenation(self):
        params = build_params(
            [[0.7, 0.3]], [[0.4, 0.6]], np.full((2, 2, 2), 0.5)
        )
        np.testing.assert_allclose(build_features(0, 0, params), [0.7, 0.3, 0.4, 0.6, 1.0])

    def test_uniform_rows(self):
        k, l = 3, 2
        params = build_params(
            np.full((1, k), 1 / k), np.full((1, l), 1 / l), np.full((2, k, l), 0.5)
        )
        features = build_features(0, 0, params)
        np.testing.assert_allclose(features, [1 / 3, 1 / 3, 1 / 3, 0.5, 0.5, 1.0])

    def test_default_dimensions_give_42(self):
        rng = np.random.default_rng(0)
        k, l = 25, 16
        params = build_params(
            rng.dirichlet(np.ones(k), size=2),
            rng.dirichlet(np.ones(l), size=2),
            np.full((3, k, l), 1 / 3),
            user_grid=GridLayout(5, 5),
            product_grid=GridLayout(4, 4),
        )
        assert build_features(1, 0, params).shape == (42,)
        assert build_feature_matrix([0, 1], [1, 0], params).shape == (2, 42)

    def test_unknown_index_rejected(self):
        params = build_params([[1.0]], [[1.0]], [[[1.0]]])
        with pytest.raises(ValueError):
            build_features(1, 0, params)


class TestFitRidge:
    def test_two_points_exact_interpolation(self):
        features = np.array([[0.0, 1.0], [2.0, 1.0]])
        ratings = np.array([1.0, 5.0])
        model = fit_ridge(features, ratings, ridge_lambda=0.0)
        np.testing.assert_allclose(predict(model, features), ratings, atol=1e-12)

    def test_constant_ratings_collapse_to_bias(self):
        # by hand on a 2-feature instance: loss ((w0 x + w1) - c)^2 + l w0^2
        # is minimized at w0 = 0, w1 = c, so any input predicts c
        rng = np.random.default_rng(1)
        features = np.hstack([rng.random((6, 1)), np.ones((6, 1))])
        model = fit_ridge(features, np.full(6, 3.5), ridge_lambda=0.1)
        np.testing.assert_allclose(model.weights, [0.0, 3.5], atol=1e-12)
        probe = np.array([[17.0, 1.0]])
        assert predict(model, probe)[0] == pytest.approx(3.5, abs=1e-12)

    def test_matches_pseudo_inverse_oracle(self):
        rng = np.random.default_rng(2)
        for _ in range(20):
            n, d = int(rng.integers(5, 40)), int(rng.integers(2, 50))
            features = np.hstack([rng.normal(size=(n, d - 1)), np.ones((n, 1))])
            ratings = rng.normal(size=n)
            lam = float(rng.uniform(1e-4, 1.0))
            model = fit_ridge(features, ratings, ridge_lambda=lam)
            expected = oracles.ridge_pinv(features, ratings, lam)
            np.testing.assert_allclose(model.weights, expected, atol=1e-8)

    def test_singular_without_regularization(self):
        features = np.array([[1.0, 1.0, 1.0], [2.0, 2.0, 1.0], [3.0, 3.0, 1.0]])
        with pytest.raises(np.linalg.LinAlgError, match="ridge_lambda"):
            fit_ridge(features, np.array([1.0, 2.0, 3.0]), ridge_lambda=0.0)

    def test_order_invariance(self):
        rng = np.random.default_rng(3)
        features = np.hstack([rng.normal(size=(10, 3)), np.ones((10, 1))])
        ratings = rng.normal(size=10)
        model_a = fit_ridge(features, ratings)
        perm = rng.permutation(10)
        model_b = fit_ridge(features[perm], ratings[perm])
        np.testing.assert_allclose(model_a.weights, model_b.weights, atol=1e-10)

    def test_empty_rejected(self):
        with pytest.raises(ValueError):
            fit_ridge(np.empty((0, 3)), np.empty(0))


class TestPredict:
    def test_bias_only(self):
        model = fit_ridge(np.ones((3, 1)), np.full(3, 3.0))
        assert predict(model, np.array([1.0])) == pytest.approx(3.0)

    def test_clamping(self):
        model = fit_ridge(np.array([[1.0, 1.0], [2.0, 1.0]]), np.array([2.9, 5.7]))
        model.weights = np.array([0.0, 5.7])
        assert predict(model, np.array([0.0, 1.0])) == pytest.approx(5.7)
        model.clamp = True
        assert predict(model, np.array([0.0, 1.0])) == pytest.approx(5.0)
        model.weights = np.array([0.0, 0.3])
        assert predict(model, np.array([0.0, 1.0])) == pytest.approx(1.0)

    def test_affine_in_inputs_without_clamp(self):
        rng = np.random.default_rng(4)
        features = np.hstack([rng.normal(size=(8, 4)), np.ones((8, 1))])
        model = fit_ridge(features, rng.normal(size=8))
        x, y = rng.normal(size=5), rng.normal(size=5)
        for alpha in (0.0, 0.3, 1.0):
            blend = alpha * x + (1 - alpha) * y
            expected = alpha * predict(model, x) + (1 - alpha) * predict(model, y)
            assert predict(model, blend) == pytest.approx(expected, abs=1e-12)

    def test_length_mismatch(self):
        model = fit_ridge(np.ones((2, 2)), np.ones(2), ridge_lambda=1e-3)
        with pytest.raises(ValueError):
            predict(model, np.ones(3))


class TestEvaluateMse:
    def test_perfect_predictions(self):
        features = np.array([[1.0, 1.0], [2.0, 1.0]])
        ratings = np.array([2.0, 3.0])
        model = fit_ridge(features, ratings, ridge_lambda=0.0)
        assert evaluate_mse(model, features, ratings).mse == pytest.approx(0.0, abs=1e-20)

    def test_constant_three_against_extremes(self):
        model = baseline_global_mean(np.ones((2, 1)), np.array([3.0, 3.0]))
        result = evaluate_mse(model, np.ones((2, 1)), np.array([1.0, 5.0]))
        assert result.mse == pytest.approx(4.0)
        assert result.count == 2

    def test_residuals_kept_on_request(self):
        model = baseline_global_mean(np.ones((2, 1)), np.array([2.0, 4.0]))
        result = evaluate_mse(model, np.ones((2, 1)), np.array([2.0, 4.0]), keep_residuals=True)
        np.testing.assert_allclose(result.residuals, [1.0, -1.0])

    def test_empty_rejected(self):
        model = baseline_global_mean(np.ones((1, 1)), np.array([3.0]))
        with pytest.raises(ValueError):
            evaluate_mse(model, np.empty((0, 1)), np.empty(0))


class TestBaseline:
    def test_mean_of_two(self):
        model = baseline_global_mean(np.ones((2, 3)), np.array([2.0, 4.0]))
        np.testing.assert_allclose(model.weights, [0.0, 0.0, 3.0])

    def test_single_rating(self):
        model = baseline_global_mean(np.ones((1, 2)), np.array([5.0]))
        assert predict(model, np.array([0.0, 1.0])) == pytest.approx(5.0)

    def test_train_mse_is_variance(self):
        rng = np.random.default_rng(5)
        ratings = rng.integers(1, 6, size=30).astype(float)
        features = np.hstack([rng.random((30, 2)), np.ones((30, 1))])
        model = baseline_global_mean(features, ratings)
        assert evaluate_mse(model, features, ratings).mse == pytest.approx(ratings.var())

    def test_ridge_beats_baseline_on_train(self):
        rng = np.random.default_rng(6)
        for _ in range(10):
            n = 25
            features = np.hstack([rng.dirichlet(np.ones(3), size=n), np.ones((n, 1))])
            ratings = rng.integers(1, 6, size=n).astype(float)
            ridge = fit_ridge(features, ratings, ridge_lambda=1e-6)
            baseline = baseline_global_mean(features, ratings)
            assert (
                evaluate_mse(ridge, features, ratings).mse
                <= evaluate_mse(baseline, features, ratings).mse + 1e-12
            )


class TestPredictionsTsv:
    def test_format(self, tmp_path):
        path = tmp_path / "pred.tsv"
        write_predictions_tsv(
            path, ["u1", "u2"], ["p1", "p2"], [4.0, 2.0], [3.5, 2.25]
        )
        lines = path.read_text().splitlines()
        assert lines[0] == "user_id\tproduct_id\trating\tprediction\tresidual"
        assert lines[1] == "u1\tp1\t4\t3.500000\t-0.500000"
        assert lines[2] == "u2\tp2\t2\t2.250000\t0.250000"
