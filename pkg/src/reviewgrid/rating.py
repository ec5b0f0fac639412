"""Linear rating prediction over latent class assignments.

A review's feature vector is the concatenation of its user's and
product's class rows plus a bias term, so predictions stay directly
attributable to interpretable classes.  The regressor is closed-form
ridge on the normal equations; the bias is never regularized.  A small
positive ridge weight matters because each class block sums to one, which
makes the design matrix rank-deficient together with the bias column.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .model import ModelParams


@dataclass
class RatingModel:
    weights: np.ndarray  # (features,), bias weight last
    ridge_lambda: float
    clamp: bool = False
    clamp_range: tuple[float, float] = (1.0, 5.0)


@dataclass
class EvalResult:
    mse: float
    count: int
    residuals: np.ndarray | None = None


def build_features(u: int, p: int, params: ModelParams) -> np.ndarray:
    """Concatenate [user class row, product class row, 1]."""
    if not 0 <= u < params.n_users:
        raise ValueError(f"user index {u} out of range")
    if not 0 <= p < params.n_products:
        raise ValueError(f"product index {p} out of range")
    return np.concatenate([params.theta_u[u], params.theta_p[p], [1.0]])


def build_feature_matrix(
    users: Sequence[int], products: Sequence[int], params: ModelParams
) -> np.ndarray:
    users = np.asarray(users, dtype=int)
    products = np.asarray(products, dtype=int)
    ones = np.ones((len(users), 1))
    return np.hstack([params.theta_u[users], params.theta_p[products], ones])


def fit_ridge(
    features: np.ndarray, ratings: np.ndarray, ridge_lambda: float = 1e-3
) -> RatingModel:
    """Solve the ridge normal equations exactly.

    Minimizes sum (w.x - r)^2 + lambda * |w_without_bias|^2; the bias
    column is assumed last.  A singular system (possible only at
    lambda = 0) raises with a hint to regularize.
    """
    features = np.asarray(features, dtype=float)
    ratings = np.asarray(ratings, dtype=float)
    if features.ndim != 2 or len(features) == 0 or len(features) != len(ratings):
        raise ValueError("need a nonempty feature matrix matching the ratings")
    if ridge_lambda < 0:
        raise ValueError("ridge_lambda must be nonnegative")
    dim = features.shape[1]
    penalty = np.eye(dim) * ridge_lambda
    penalty[-1, -1] = 0.0
    gram = features.T @ features + penalty
    if ridge_lambda == 0 and np.linalg.matrix_rank(gram) < dim:
        raise np.linalg.LinAlgError(
            "normal equations are singular; use ridge_lambda > 0"
        )
    weights = np.linalg.solve(gram, features.T @ ratings)
    return RatingModel(weights=weights, ridge_lambda=ridge_lambda)


def predict(model: RatingModel, features: np.ndarray) -> np.ndarray | float:
    """Affine prediction, optionally clipped to the rating range."""
    features = np.asarray(features, dtype=float)
    if features.shape[-1] != len(model.weights):
        raise ValueError(
            f"feature length {features.shape[-1]} does not match {len(model.weights)} weights"
        )
    raw = features @ model.weights
    if model.clamp:
        raw = np.clip(raw, *model.clamp_range)
    return float(raw) if np.ndim(raw) == 0 else raw


def evaluate_mse(
    model: RatingModel, features: np.ndarray, ratings: np.ndarray, keep_residuals: bool = False
) -> EvalResult:
    ratings = np.asarray(ratings, dtype=float)
    if len(ratings) == 0:
        raise ValueError("cannot evaluate on an empty set")
    residuals = np.atleast_1d(predict(model, features)) - ratings
    return EvalResult(
        mse=float(np.mean(residuals**2)),
        count=len(ratings),
        residuals=residuals if keep_residuals else None,
    )


def baseline_global_mean(features: np.ndarray, ratings: np.ndarray) -> RatingModel:
    """Constant predictor at the train mean (zero feature weights)."""
    ratings = np.asarray(ratings, dtype=float)
    if len(ratings) == 0:
        raise ValueError("cannot fit a baseline on an empty set")
    weights = np.zeros(np.asarray(features).shape[1])
    weights[-1] = ratings.mean()
    return RatingModel(weights=weights, ridge_lambda=0.0)


def write_predictions_tsv(
    path: str | Path,
    user_ids: Sequence[str],
    product_ids: Sequence[str],
    ratings: Sequence[float],
    predictions: Sequence[float],
) -> None:
    """Export (user_id, product_id, rating, prediction, residual) rows."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("user_id\tproduct_id\trating\tprediction\tresidual\n")
        for uid, pid, rating, pred in zip(user_ids, product_ids, ratings, predictions):
            fh.write(f"{uid}\t{pid}\t{rating:g}\t{pred:.6f}\t{pred - rating:.6f}\n")
