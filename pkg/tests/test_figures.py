"""Smoke tests: every figure renders to a nonempty file."""

import numpy as np

from reviewgrid.corpus import Vocabulary
from reviewgrid.figures import (
    likelihood_curve,
    posterior_heatmap,
    prediction_figure,
    word_grid_figure,
)
from reviewgrid.grid import GridLayout
from reviewgrid.interpret import class_word_distribution, top_words
from reviewgrid.model import EmTrace

from conftest import build_params


def test_likelihood_curve(tmp_path):
    trace = EmTrace(loglik=[-120.0, -100.0, -95.0, -94.5], iterations=4, converged=True)
    out = likelihood_curve(trace, tmp_path / "curve.png")
    assert out.exists() and out.stat().st_size > 0


def test_word_grid_figure(tmp_path):
    rng = np.random.default_rng(0)
    v, k = 8, 4
    phi = rng.random((v, k, 1))
    phi /= phi.sum(axis=0, keepdims=True)
    params = build_params(
        rng.dirichlet(np.ones(k), size=1), [[1.0]], phi, user_grid=GridLayout(2, 2)
    )
    vocab = Vocabulary([f"w{i}" for i in range(v)])
    report = top_words(class_word_distribution(params, "user"), vocab, n=3)
    plain = word_grid_figure(report, tmp_path / "grid.png")
    shaded = word_grid_figure(
        report, tmp_path / "grid_shaded.png", shading=np.array([0.1, 0.6, 0.2, 0.1])
    )
    assert plain.stat().st_size > 0
    assert shaded.stat().st_size > 0


def test_posterior_heatmap(tmp_path):
    out = posterior_heatmap(
        [0.1, 0.2, 0.3, 0.4], GridLayout(2, 2), tmp_path / "post.png", title="posterior"
    )
    assert out.stat().st_size > 0


def test_prediction_figure(tmp_path):
    rng = np.random.default_rng(1)
    ratings = rng.integers(1, 6, size=40).astype(float)
    predictions = ratings + rng.normal(0, 0.4, size=40)
    out = prediction_figure(ratings, predictions, tmp_path / "pred.png")
    assert out.stat().st_size > 0
