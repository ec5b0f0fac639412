"""Self-organizing map initialization for the latent class model.

Two SOMs (one over user term-frequency vectors, one over product vectors)
provide hard class assignments that seed the EM run: the hard assignments
are softened into row-stochastic priors, and the class-conditional word
distribution starts from Laplace-smoothed empirical counts taken after one
channel-noise corruption of each assignment.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .corpus import Corpus, term_frequency_vectors
from .grid import ChannelNoise, GridLayout, sample_corrupted, squared_grid_distances

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class SomConfig:
    """Online training schedule.

    Learning rate and neighborhood radius decay linearly over the full run
    (epochs x items steps).  A ``radius_initial`` of None means
    max(rows, cols) / 2.
    """

    epochs: int = 10
    lr_initial: float = 0.5
    lr_final: float = 0.01
    radius_initial: float | None = None
    radius_final: float = 0.5


@dataclass
class SomMap:
    grid: GridLayout
    codebook: np.ndarray
    config: SomConfig
    seed: int
    quantization_errors: list[float] = field(default_factory=list)


def _normalize_rows(vectors: np.ndarray) -> np.ndarray:
    norms = np.linalg.norm(vectors, axis=1, keepdims=True)
    return np.divide(vectors, norms, out=np.zeros_like(vectors, dtype=float), where=norms > 0)


def _sq_dists_to_codebook(vectors: np.ndarray, codebook: np.ndarray) -> np.ndarray:
    """(items, nodes) squared distances without an (items, nodes, dim) blowup."""
    dists = (
        (vectors**2).sum(axis=1)[:, None]
        - 2.0 * vectors @ codebook.T
        + (codebook**2).sum(axis=1)[None, :]
    )
    return np.maximum(dists, 0.0)


def train_som(
    vectors: np.ndarray,
    grid: GridLayout,
    config: SomConfig = SomConfig(),
    seed: int = 0,
    normalize: bool = True,
) -> SomMap:
    """Run online Kohonen training over the given vectors.

    Vectors are L2-normalized first (configurable) so heavy reviewers do
    not dominate the map.  Items are visited in a freshly shuffled order
    each epoch; both the shuffle and the small uniform codebook
    initialization come from ``seed``, so training is deterministic.
    """
    vectors = np.asarray(vectors, dtype=float)
    if vectors.ndim != 2 or vectors.shape[0] == 0:
        raise ValueError("training requires a nonempty 2-D array of vectors")
    if normalize:
        vectors = _normalize_rows(vectors)
    n_items, dim = vectors.shape
    rng = np.random.default_rng(seed)
    codebook = rng.random((grid.n_classes, dim)) * 0.01
    node_dist2 = squared_grid_distances(grid)

    radius_initial = config.radius_initial
    if radius_initial is None:
        radius_initial = max(grid.rows, grid.cols) / 2.0
    radius_initial = max(radius_initial, config.radius_final)

    total_steps = config.epochs * n_items
    som = SomMap(grid=grid, codebook=codebook, config=config, seed=seed)
    step = 0
    for _ in range(config.epochs):
        for i in rng.permutation(n_items):
            frac = step / max(total_steps - 1, 1)
            lr = config.lr_initial + (config.lr_final - config.lr_initial) * frac
            radius = radius_initial + (config.radius_final - radius_initial) * frac
            x = vectors[i]
            bmu = int(np.argmin(((codebook - x) ** 2).sum(axis=1)))
            influence = np.exp(-node_dist2[bmu] / (2.0 * radius * radius))
            codebook += lr * influence[:, None] * (x - codebook)
            step += 1
        # cheap argmin via the quadratic expansion, exact distances after
        best = _sq_dists_to_codebook(vectors, codebook).argmin(axis=1)
        errors = np.linalg.norm(vectors - codebook[best], axis=1)
        som.quantization_errors.append(float(errors.mean()))
    return som


def assign_bmu(som: SomMap, vector: np.ndarray) -> int:
    """Best-matching unit: argmin Euclidean distance, lowest index on ties."""
    vector = np.asarray(vector, dtype=float)
    if vector.shape != (som.codebook.shape[1],):
        raise ValueError("vector dimension does not match the codebook")
    return int(np.argmin(((som.codebook - vector) ** 2).sum(axis=1)))


def assign_bmu_batch(som: SomMap, vectors: np.ndarray, normalize: bool = True) -> np.ndarray:
    vectors = np.asarray(vectors, dtype=float)
    if normalize:
        vectors = _normalize_rows(vectors)
    return _sq_dists_to_codebook(vectors, som.codebook).argmin(axis=1)


def soften_assignments(hard: Sequence[int], n_classes: int, ratio: float = 5.0) -> np.ndarray:
    """Turn hard class assignments into stochastic rows.

    The assigned class gets A = ratio / (n_classes - 1 + ratio) and the
    rest share (1 - A) evenly, which makes the assigned class exactly
    ``ratio`` times more probable than any other.  With a single class the
    row is just (1.0,).
    """
    if ratio <= 1.0:
        raise ValueError("softening ratio must be greater than 1")
    if n_classes < 1:
        raise ValueError("need at least one class")
    hard = np.asarray(hard, dtype=int)
    if hard.size and (hard.min() < 0 or hard.max() >= n_classes):
        raise ValueError("hard assignment out of class range")
    if n_classes == 1:
        return np.ones((len(hard), 1))
    peak = ratio / (n_classes - 1 + ratio)
    rest = (1.0 - peak) / (n_classes - 1)
    rows = np.full((len(hard), n_classes), rest)
    rows[np.arange(len(hard)), hard] = peak
    return rows


def init_word_distribution(
    corpus: Corpus,
    user_assign: Sequence[int],
    product_assign: Sequence[int],
    noise_u: ChannelNoise,
    noise_p: ChannelNoise,
    laplace_m: float = 1.0,
    rng: np.random.Generator | None = None,
    entry_indices: Sequence[int] | None = None,
) -> np.ndarray:
    """Laplace-smoothed empirical word distribution per class pair.

    Each user's and product's hard class is corrupted once through its
    channel noise (users first, in index order, then products), then
    tokens are counted by the resulting class pair:
    P(w | k, l) = (N(w, k, l) + m) / (m V + sum_w' N(w', k, l)).
    """
    if laplace_m <= 0:
        raise ValueError("laplace_m must be positive")
    rng = np.random.default_rng(0) if rng is None else rng
    user_classes = np.array([sample_corrupted(int(k), noise_u, rng) for k in user_assign])
    product_classes = np.array([sample_corrupted(int(l), noise_p, rng) for l in product_assign])
    n_words = corpus.n_words
    counts = np.zeros((n_words, noise_u.n_classes, noise_p.n_classes))
    indices = range(len(corpus.entries)) if entry_indices is None else entry_indices
    for i in indices:
        entry = corpus.entries[i]
        k = user_classes[entry.user]
        l = product_classes[entry.product]
        for word, count in entry.counts.items():
            counts[word, k, l] += count
    return (counts + laplace_m) / (laplace_m * n_words + counts.sum(axis=0, keepdims=True))


@dataclass
class InitParams:
    """EM starting point: softened priors plus the smoothed word tensor."""

    user_prior: np.ndarray
    product_prior: np.ndarray
    word_dist: np.ndarray


def initialize_model(
    corpus: Corpus,
    user_grid: GridLayout,
    product_grid: GridLayout,
    noise_u: ChannelNoise,
    noise_p: ChannelNoise,
    softening_ratio: float = 5.0,
    laplace_m: float = 1.0,
    som_config: SomConfig = SomConfig(),
    seed: int = 0,
    entry_indices: Sequence[int] | None = None,
) -> InitParams:
    """Full initialization pipeline over a corpus (or a train subset of it).

    Term frequencies are aggregated from the given entries only, so the
    initialization never sees held-out reviews.  The user and product maps
    are trained with derived seeds; the corruption draw gets its own.
    """
    seeds = np.random.SeedSequence(seed).spawn(3)
    user_tf = term_frequency_vectors(corpus, "user", entry_indices)
    product_tf = term_frequency_vectors(corpus, "product", entry_indices)
    user_som = train_som(user_tf, user_grid, som_config, seed=_seed_int(seeds[0]))
    product_som = train_som(product_tf, product_grid, som_config, seed=_seed_int(seeds[1]))
    user_assign = assign_bmu_batch(user_som, user_tf)
    product_assign = assign_bmu_batch(product_som, product_tf)
    logger.info(
        "SOM assignments: %d user nodes, %d product nodes in use",
        len(set(user_assign.tolist())),
        len(set(product_assign.tolist())),
    )
    word_dist = init_word_distribution(
        corpus,
        user_assign,
        product_assign,
        noise_u,
        noise_p,
        laplace_m=laplace_m,
        rng=np.random.default_rng(seeds[2]),
        entry_indices=entry_indices,
    )
    return InitParams(
        user_prior=soften_assignments(user_assign, user_grid.n_classes, softening_ratio),
        product_prior=soften_assignments(product_assign, product_grid.n_classes, softening_ratio),
        word_dist=word_dist,
    )


def _seed_int(seq: np.random.SeedSequence) -> int:
    return int(seq.generate_state(1)[0])
