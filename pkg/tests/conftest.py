"""Shared fixtures: toy model builders, a synthetic topographic run, CLI data."""

from __future__ import annotations

from pathlib import Path

import numpy as np
import pytest

from reviewgrid.corpus import Corpus
from reviewgrid.grid import GridLayout, channel_noise
from reviewgrid.model import ModelParams, TokenTable, em_iteration, sample_corpus
from reviewgrid.som import SomConfig, initialize_model


def build_params(
    theta_u,
    theta_p,
    phi,
    sigma_u=1.0,
    sigma_p=1.0,
    user_grid=None,
    product_grid=None,
) -> ModelParams:
    """Wrap raw arrays into ModelParams, defaulting to C x 1 line grids."""
    theta_u = np.asarray(theta_u, dtype=float)
    theta_p = np.asarray(theta_p, dtype=float)
    phi = np.asarray(phi, dtype=float)
    user_grid = user_grid or GridLayout(theta_u.shape[1], 1)
    product_grid = product_grid or GridLayout(theta_p.shape[1], 1)
    return ModelParams(
        theta_u=theta_u,
        theta_p=theta_p,
        phi=phi,
        noise_u=channel_noise(user_grid, sigma_u),
        noise_p=channel_noise(product_grid, sigma_p),
        user_grid=user_grid,
        product_grid=product_grid,
    )


def tokens_from_triples(triples) -> TokenTable:
    """TokenTable from raw (user, product, word, count) tuples."""
    users, products, words, counts = zip(*triples)
    return TokenTable(
        users=np.array(users, dtype=np.int64),
        products=np.array(products, dtype=np.int64),
        words=np.array(words, dtype=np.int64),
        counts=np.array(counts, dtype=np.float64),
        n_entries=len({(u, p) for u, p, _, _ in triples}),
    )


def make_topographic_params(
    rng: np.random.Generator,
    n_users: int = 50,
    n_products: int = 30,
    n_words: int = 100,
    user_grid: tuple[int, int] = (3, 3),
    product_grid: tuple[int, int] = (2, 2),
    sigma_u: float = 1.0,
    sigma_p: float = 0.8,
) -> ModelParams:
    """Generating model whose word tensor is smooth across the grids."""
    ug = GridLayout(*user_grid)
    pg = GridLayout(*product_grid)
    raw = rng.gamma(0.5, size=(n_words, ug.n_classes, pg.n_classes)) + 1e-3
    smooth_u = channel_noise(ug, 1.0).matrix
    smooth_p = channel_noise(pg, 1.0).matrix
    phi = np.einsum("ka,wab,lb->wkl", smooth_u, raw, smooth_p)
    phi /= phi.sum(axis=0, keepdims=True)
    theta_u = rng.dirichlet(np.full(ug.n_classes, 0.3), size=n_users)
    theta_p = rng.dirichlet(np.full(pg.n_classes, 0.3), size=n_products)
    return ModelParams(
        theta_u=theta_u,
        theta_p=theta_p,
        phi=phi,
        noise_u=channel_noise(ug, sigma_u),
        noise_p=channel_noise(pg, sigma_p),
        user_grid=ug,
        product_grid=pg,
    )


@pytest.fixture(scope="session")
def synthetic_fit():
    """Sample a synthetic corpus from known parameters and train on it.

    Provides the generating model, train/held-out corpora, and the full
    sequence of per-iteration (params, loglik) snapshots from 30 EM
    iterations, shared by the EM-behavior tests and the acceptance suite.
    """
    rng = np.random.default_rng(20240817)
    true_params = make_topographic_params(rng)
    n_users, n_products = true_params.n_users, true_params.n_products
    all_pairs = [(u, p) for u in range(n_users) for p in range(n_products)]
    order = rng.permutation(len(all_pairs))
    train_pairs = [all_pairs[i] for i in order[:1000]]
    heldout_pairs = [all_pairs[i] for i in order[1000:1200]]
    train_corpus = sample_corpus(true_params, train_pairs, tokens_per_review=20, rng=rng)
    heldout_corpus = sample_corpus(true_params, heldout_pairs, tokens_per_review=20, rng=rng)

    init = initialize_model(
        train_corpus,
        true_params.user_grid,
        true_params.product_grid,
        true_params.noise_u,
        true_params.noise_p,
        som_config=SomConfig(epochs=5),
        seed=7,
    )
    params = ModelParams(
        theta_u=init.user_prior.copy(),
        theta_p=init.product_prior.copy(),
        phi=init.word_dist.copy(),
        noise_u=true_params.noise_u,
        noise_p=true_params.noise_p,
        user_grid=true_params.user_grid,
        product_grid=true_params.product_grid,
    )
    tokens = TokenTable.from_corpus(train_corpus)
    snapshots = []
    for _ in range(30):
        params, loglik = em_iteration(tokens, params)
        snapshots.append((params, loglik))
    return {
        "true_params": true_params,
        "train_corpus": train_corpus,
        "heldout_corpus": heldout_corpus,
        "init": init,
        "tokens": tokens,
        "snapshots": snapshots,
        "final_params": params,
    }


TOPIC_WORDS = {
    "care": ["wax", "polish", "shine", "buff", "gloss", "coat", "towel", "rinse"],
    "music": ["guitar", "string", "pick", "fret", "amp", "chord", "tuner", "strap"],
}


def write_toy_tsv(path: Path) -> Path:
    """Two-topic review file: 10 users x 12 products, deterministic text."""
    lines = []
    for u in range(10):
        topic = "care" if u < 5 else "music"
        words = TOPIC_WORDS[topic]
        for p in range(12):
            if (u + p) % 5 == 4 and u % 3 == 0:
                continue  # leave a few pairs unreviewed
            product_topic = "care" if p < 6 else "music"
            mix = TOPIC_WORDS[product_topic]
            text_words = [
                words[(u + p) % len(words)],
                words[(u + 2 * p + 1) % len(words)],
                mix[(u * p) % len(mix)],
                mix[(u + p + 2) % len(mix)],
                "the",  # stopword, dropped in normalization
                words[(2 * u + p) % len(words)],
            ]
            rating = 1 + ((u * 3 + p * 2) % 5)
            lines.append(f"user{u:02d}\tprod{p:02d}\t{rating}\t{' '.join(text_words)}")
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return path


@pytest.fixture()
def toy_tsv(tmp_path):
    return write_toy_tsv(tmp_path / "toy_reviews.tsv")


def corpus_total_tokens(corpus: Corpus) -> int:
    return sum(e.total for e in corpus.entries)
