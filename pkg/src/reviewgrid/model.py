"""Two-sided latent class model with grid-smoothed classes, trained by EM.

Users and products each carry a multinomial distribution over their latent
classes; a review token is generated by sampling both classes, corrupting
each through its grid channel noise, and drawing the word from the
class-pair word distribution.  Writing ``a = theta_u @ noise_u`` and
``b = theta_p @ noise_p`` for the corrupted (projected) priors, the token
probability is

    P(w | u, p) = sum_{k', l'} phi[w, k', l'] * a[u, k'] * b[p, l'].

The E-step needs two posterior families per token: over the corrupted
class pair (driving the word-distribution update) and over the original
class pair (driving the prior updates).  Both share the same normalizer
P(w | u, p).  The M-step is closed form; channel noise stays fixed.

Per-token posteriors are never materialized corpus-wide: tokens are
processed in chunks and folded straight into sufficient-statistic
accumulators, keeping one iteration at O(tokens * K * L) after a
per-word O(V * (K^2 L + K L^2)) precomputation.
"""

from __future__ import annotations

import logging
import math
from collections import Counter
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .corpus import Corpus, ReviewEntry, Vocabulary
from .grid import ChannelNoise, GridLayout, sample_corrupted
from .som import InitParams

logger = logging.getLogger(__name__)

EM_CHUNK = 8192


@dataclass
class ModelParams:
    """The three multinomial families plus the fixed grid machinery."""

    theta_u: np.ndarray  # (users, K): P(class k | user)
    theta_p: np.ndarray  # (products, L): P(class l | product)
    phi: np.ndarray  # (words, K, L): P(word | corrupted pair)
    noise_u: ChannelNoise
    noise_p: ChannelNoise
    user_grid: GridLayout
    product_grid: GridLayout

    @property
    def n_users(self) -> int:
        return self.theta_u.shape[0]

    @property
    def n_products(self) -> int:
        return self.theta_p.shape[0]

    @property
    def n_words(self) -> int:
        return self.phi.shape[0]

    @property
    def n_user_classes(self) -> int:
        return self.theta_u.shape[1]

    @property
    def n_product_classes(self) -> int:
        return self.theta_p.shape[1]

    def validate(self, atol: float = 1e-10) -> None:
        if self.phi.shape != (self.n_words, self.n_user_classes, self.n_product_classes):
            raise ValueError("phi shape inconsistent with theta dimensions")
        if np.any(self.theta_u < 0) or np.any(self.theta_p < 0) or np.any(self.phi < 0):
            raise ValueError("negative probability entry")
        for name, sums in (
            ("theta_u rows", self.theta_u.sum(axis=1)),
            ("theta_p rows", self.theta_p.sum(axis=1)),
            ("phi slices", self.phi.sum(axis=0)),
        ):
            if not np.allclose(sums, 1.0, atol=atol):
                raise ValueError(f"{name} do not sum to 1 (max err {np.abs(sums - 1).max():.3g})")


@dataclass
class ProjectedPriors:
    """Per-user and per-product class distributions after channel noise."""

    user: np.ndarray  # (users, K)
    product: np.ndarray  # (products, L)


@dataclass
class EmTrace:
    loglik: list[float] = field(default_factory=list)
    iterations: int = 0
    converged: bool = False


@dataclass
class TokenTable:
    """Flattened (user, product, word, count) view of a corpus subset."""

    users: np.ndarray
    products: np.ndarray
    words: np.ndarray
    counts: np.ndarray
    n_entries: int

    @classmethod
    def from_corpus(cls, corpus: Corpus, entry_indices: Sequence[int] | None = None) -> "TokenTable":
        indices = range(len(corpus.entries)) if entry_indices is None else entry_indices
        users, products, words, counts = [], [], [], []
        n_entries = 0
        for i in indices:
            entry = corpus.entries[i]
            n_entries += 1
            for word, count in entry.counts.items():
                users.append(entry.user)
                products.append(entry.product)
                words.append(word)
                counts.append(count)
        return cls(
            users=np.asarray(users, dtype=np.int64),
            products=np.asarray(products, dtype=np.int64),
            words=np.asarray(words, dtype=np.int64),
            counts=np.asarray(counts, dtype=np.float64),
            n_entries=n_entries,
        )

    def total_tokens(self) -> float:
        return float(self.counts.sum())


def project_priors(params: ModelParams) -> ProjectedPriors:
    """Push the class priors through the channel noise (matrix products)."""
    return ProjectedPriors(
        user=params.theta_u @ params.noise_u.matrix,
        product=params.theta_p @ params.noise_p.matrix,
    )


def word_probability(u: int, p: int, w: int, params: ModelParams, priors: ProjectedPriors) -> float:
    return float(np.einsum("kl,k,l->", params.phi[w], priors.user[u], priors.product[p]))


def posterior_y(
    u: int, p: int, w: int, params: ModelParams, priors: ProjectedPriors
) -> np.ndarray:
    """Posterior over the corrupted class pair given one token."""
    joint = params.phi[w] * np.outer(priors.user[u], priors.product[p])
    total = joint.sum()
    if total <= 0:
        raise FloatingPointError(f"zero posterior mass for token (u={u}, p={p}, w={w})")
    return joint / total


def word_class_mix(params: ModelParams) -> np.ndarray:
    """Per-word class-pair mixture after channel smoothing.

    mix[w, k, l] = sum_{k', l'} noise_u[k, k'] * phi[w, k', l'] * noise_p[l, l'],
    the inner double sum of the original-class posterior.
    """
    return np.einsum(
        "ka,wab,lb->wkl", params.noise_u.matrix, params.phi, params.noise_p.matrix, optimize=True
    )


def posterior_z(u: int, p: int, w: int, params: ModelParams, mix_w: np.ndarray) -> np.ndarray:
    """Posterior over the original class pair given one token.

    ``mix_w`` is the word's slice of :func:`word_class_mix`.
    """
    joint = np.outer(params.theta_u[u], params.theta_p[p]) * mix_w
    total = joint.sum()
    if total <= 0:
        raise FloatingPointError(f"zero posterior mass for token (u={u}, p={p}, w={w})")
    return joint / total


def log_likelihood(tokens: TokenTable, params: ModelParams) -> float:
    """Token-multiplicity-weighted log-likelihood of a corpus subset."""
    priors = project_priors(params)
    total = 0.0
    for start in range(0, len(tokens.words), EM_CHUNK):
        sl = slice(start, start + EM_CHUNK)
        probs = np.einsum(
            "tkl,tk,tl->t",
            params.phi[tokens.words[sl]],
            priors.user[tokens.users[sl]],
            priors.product[tokens.products[sl]],
            optimize=True,
        )
        if np.any(probs <= 0):
            raise FloatingPointError("token with zero probability; check phi smoothing")
        total += float(tokens.counts[sl] @ np.log(probs))
    return total


def nll(tokens: TokenTable, params: ModelParams) -> float:
    """Mean negative review log-likelihood over the subset's entries."""
    if tokens.n_entries == 0:
        raise ValueError("cannot evaluate NLL on an empty subset")
    return -log_likelihood(tokens, params) / tokens.n_entries


def em_iteration(
    tokens: TokenTable, params: ModelParams, phi_floor: float = 1e-12
) -> tuple[ModelParams, float]:
    """One full E+M sweep.

    Returns the updated parameters and the train log-likelihood of the
    *incoming* parameters (computed for free from the E-step normalizers).
    ``phi_floor`` is added per cell before normalizing the word tensor so a
    class pair never assigns exact zero to any word; passing 0 recovers
    the exact closed-form update.  Users or products that contribute no
    tokens keep their current prior rows.
    """
    n_users, n_classes_u = params.theta_u.shape
    n_products, n_classes_p = params.theta_p.shape
    n_words = params.phi.shape[0]
    pair_dim = n_classes_u * n_classes_p

    priors = project_priors(params)
    mix = word_class_mix(params)

    stat_word = np.zeros(n_words * pair_dim)
    stat_user = np.zeros(n_users * n_classes_u)
    stat_product = np.zeros(n_products * n_classes_p)
    pair_offsets = np.arange(pair_dim, dtype=np.int64)
    user_offsets = np.arange(n_classes_u, dtype=np.int64)
    product_offsets = np.arange(n_classes_p, dtype=np.int64)
    loglik = 0.0

    for start in range(0, len(tokens.words), EM_CHUNK):
        sl = slice(start, start + EM_CHUNK)
        uc, pc, wc = tokens.users[sl], tokens.products[sl], tokens.words[sl]
        cc = tokens.counts[sl]

        post_pair = params.phi[wc] * priors.user[uc][:, :, None] * priors.product[pc][:, None, :]
        norm = post_pair.sum(axis=(1, 2))
        if np.any(norm <= 0):
            raise FloatingPointError("zero-probability token during E-step")
        loglik += float(cc @ np.log(norm))
        post_pair *= (cc / norm)[:, None, None]
        stat_word += np.bincount(
            (wc[:, None] * pair_dim + pair_offsets).ravel(),
            weights=post_pair.reshape(len(cc), pair_dim).ravel(),
            minlength=n_words * pair_dim,
        )

        post_orig = params.theta_u[uc][:, :, None] * params.theta_p[pc][:, None, :] * mix[wc]
        post_orig *= (cc / post_orig.sum(axis=(1, 2)))[:, None, None]
        stat_user += np.bincount(
            (uc[:, None] * n_classes_u + user_offsets).ravel(),
            weights=post_orig.sum(axis=2).ravel(),
            minlength=n_users * n_classes_u,
        )
        stat_product += np.bincount(
            (pc[:, None] * n_classes_p + product_offsets).ravel(),
            weights=post_orig.sum(axis=1).ravel(),
            minlength=n_products * n_classes_p,
        )

    user_tokens = np.bincount(tokens.users, weights=tokens.counts, minlength=n_users)
    product_tokens = np.bincount(tokens.products, weights=tokens.counts, minlength=n_products)

    theta_u = _stochastic_rows(
        stat_user.reshape(n_users, n_classes_u), user_tokens, params.theta_u
    )
    theta_p = _stochastic_rows(
        stat_product.reshape(n_products, n_classes_p), product_tokens, params.theta_p
    )

    stat_word = stat_word.reshape(n_words, n_classes_u, n_classes_p)
    denom = stat_word.sum(axis=0, keepdims=True) + phi_floor * n_words
    # a class pair with no posterior mass has an undefined update (possible
    # only with phi_floor == 0); it keeps its current word distribution
    empty = denom <= 0
    phi = (stat_word + phi_floor) / np.where(empty, 1.0, denom)
    phi = np.where(empty, params.phi, phi)
    phi /= phi.sum(axis=0, keepdims=True)

    new_params = ModelParams(
        theta_u=theta_u,
        theta_p=theta_p,
        phi=phi,
        noise_u=params.noise_u,
        noise_p=params.noise_p,
        user_grid=params.user_grid,
        product_grid=params.product_grid,
    )
    return new_params, loglik


def _stochastic_rows(stats: np.ndarray, totals: np.ndarray, fallback: np.ndarray) -> np.ndarray:
    seen = totals > 0
    rows = fallback.copy()
    rows[seen] = stats[seen] / totals[seen, None]
    rows[seen] /= rows[seen].sum(axis=1, keepdims=True)
    return rows


def fit_em(
    tokens: TokenTable,
    init: InitParams,
    noise_u: ChannelNoise,
    noise_p: ChannelNoise,
    user_grid: GridLayout,
    product_grid: GridLayout,
    max_iter: int = 100,
    rel_tol: float = 1e-5,
    phi_floor: float = 1e-12,
    callback: Callable[[int, float, float], None] | None = None,
) -> tuple[ModelParams, EmTrace]:
    """Iterate EM until the relative likelihood gain drops below ``rel_tol``.

    The trace records the train log-likelihood of the parameters entering
    each iteration.  ``callback(iteration, loglik, delta)`` fires after
    every iteration; a non-finite likelihood aborts with a diagnostic.
    """
    if len(tokens.words) == 0 and max_iter > 0:
        raise ValueError("cannot fit on an empty training set")
    params = ModelParams(
        theta_u=np.array(init.user_prior, dtype=float),
        theta_p=np.array(init.product_prior, dtype=float),
        phi=np.array(init.word_dist, dtype=float),
        noise_u=noise_u,
        noise_p=noise_p,
        user_grid=user_grid,
        product_grid=product_grid,
    )
    trace = EmTrace()
    previous = None
    for iteration in range(max_iter):
        params, loglik = em_iteration(tokens, params, phi_floor)
        if not np.isfinite(loglik):
            raise FloatingPointError(
                f"log-likelihood became non-finite at iteration {iteration}: {loglik}"
            )
        delta = float("nan") if previous is None else loglik - previous
        trace.loglik.append(loglik)
        trace.iterations += 1
        if callback is not None:
            callback(iteration, loglik, delta)
        if previous is not None and abs(delta) < rel_tol * abs(previous):
            trace.converged = True
            break
        previous = loglik
    return params, trace


def _draw(cdf: np.ndarray, rng: np.random.Generator) -> int:
    return int(np.searchsorted(cdf, rng.random(), side="right").clip(max=len(cdf) - 1))


def _letter_id(prefix: str, index: int, width: int) -> str:
    """Alphabetic-only synthetic ids, so they survive text normalization."""
    letters = []
    for _ in range(width):
        letters.append(chr(ord("a") + index % 26))
        index //= 26
    return prefix + "".join(reversed(letters))


def _synthetic_rating(user_row: np.ndarray, product_row: np.ndarray) -> float:
    """Plumbing-only rating: squashed cosine between the class rows.

    Rows of different lengths are compared on their overlapping prefix
    (zero-padding the shorter one leaves norms unchanged).
    """
    d = min(len(user_row), len(product_row))
    denom = np.linalg.norm(user_row) * np.linalg.norm(product_row)
    cosine = float(user_row[:d] @ product_row[:d]) / denom if denom > 0 else 0.0
    squashed = 1.0 / (1.0 + np.exp(-6.0 * (cosine - 0.5)))
    return float(np.clip(np.round(1.0 + 4.0 * squashed), 1.0, 5.0))


def sample_corpus(
    params: ModelParams,
    pairs: Sequence[tuple[int, int]],
    tokens_per_review: int,
    rng: np.random.Generator,
) -> Corpus:
    """Draw a synthetic corpus from the generative process.

    Each planned (user, product) pair yields one review: sample and
    corrupt both classes, then draw ``tokens_per_review`` words i.i.d.
    from the class pair's word distribution.  Duplicate pairs are skipped
    so corpus invariants hold.
    """
    if tokens_per_review < 2:
        raise ValueError("reviews need at least two tokens")
    n_words = params.n_words
    theta_u_cdf = np.cumsum(params.theta_u, axis=1)
    theta_p_cdf = np.cumsum(params.theta_p, axis=1)
    entries: list[ReviewEntry] = []
    seen: set[tuple[int, int]] = set()
    for u, p in pairs:
        if (u, p) in seen:
            continue
        seen.add((u, p))
        z_u = _draw(theta_u_cdf[u], rng)
        y_u = sample_corrupted(z_u, params.noise_u, rng)
        z_p = _draw(theta_p_cdf[p], rng)
        y_p = sample_corrupted(z_p, params.noise_p, rng)
        word_cdf = np.cumsum(params.phi[:, y_u, y_p])
        words = np.searchsorted(word_cdf, rng.random(tokens_per_review), side="right")
        words = np.clip(words, 0, n_words - 1)
        counts = Counter(int(w) for w in words)
        entries.append(
            ReviewEntry(
                user=u,
                product=p,
                rating=_synthetic_rating(params.theta_u[u], params.theta_p[p]),
                counts=dict(sorted(counts.items())),
            )
        )
    width = max(3, math.ceil(math.log(max(n_words, params.n_users, params.n_products, 2), 26)))
    return Corpus(
        users=[_letter_id("u", i, width) for i in range(params.n_users)],
        products=[_letter_id("p", i, width) for i in range(params.n_products)],
        vocab=Vocabulary([_letter_id("w", i, width) for i in range(n_words)]),
        entries=entries,
    )
