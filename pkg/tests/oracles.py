"""Independent brute-force references used to check the fast paths.

Everything here is written with explicit nested loops over plain floats,
deliberately avoiding the library's vectorized formulations, so the two
sides of each comparison share no code.
"""

from __future__ import annotations

import math

import numpy as np


def make_instance(rng, n_users, n_products, n_words, k_classes, l_classes, n_tokens):
    """Random model + token list with C x 1 grids for both sides."""
    theta_u = rng.random((n_users, k_classes)) + 0.1
    theta_u /= theta_u.sum(axis=1, keepdims=True)
    theta_p = rng.random((n_products, l_classes)) + 0.1
    theta_p /= theta_p.sum(axis=1, keepdims=True)
    phi = rng.random((n_words, k_classes, l_classes)) + 0.1
    phi /= phi.sum(axis=0, keepdims=True)
    tokens = [
        (
            int(rng.integers(n_users)),
            int(rng.integers(n_products)),
            int(rng.integers(n_words)),
            int(rng.integers(1, 4)),
        )
        for _ in range(n_tokens)
    ]
    return theta_u, theta_p, phi, tokens


def channel_matrix(n_classes, sigma):
    """Direct evaluation of the Gaussian-neighborhood rows on a C x 1 grid."""
    matrix = [[0.0] * n_classes for _ in range(n_classes)]
    for z in range(n_classes):
        weights = [math.exp(-((z - y) ** 2) / (2.0 * sigma * sigma)) for y in range(n_classes)]
        total = sum(weights)
        for y in range(n_classes):
            matrix[z][y] = weights[y] / total
    return np.array(matrix)


def token_word_probability(u, p, w, theta_u, theta_p, phi, noise_u, noise_p):
    """Quadruple sum over original and corrupted class pairs."""
    total = 0.0
    for k in range(theta_u.shape[1]):
        for l in range(theta_p.shape[1]):
            for k2 in range(theta_u.shape[1]):
                for l2 in range(theta_p.shape[1]):
                    total += (
                        theta_u[u][k]
                        * noise_u[k][k2]
                        * theta_p[p][l]
                        * noise_p[l][l2]
                        * phi[w][k2][l2]
                    )
    return total


def _joint(u, p, w, theta_u, theta_p, phi, noise_u, noise_p):
    K, L = theta_u.shape[1], theta_p.shape[1]
    joint = np.zeros((K, L, K, L))
    for k in range(K):
        for l in range(L):
            for k2 in range(K):
                for l2 in range(L):
                    joint[k][l][k2][l2] = (
                        theta_u[u][k]
                        * noise_u[k][k2]
                        * theta_p[p][l]
                        * noise_p[l][l2]
                        * phi[w][k2][l2]
                    )
    return joint


def posterior_original(u, p, w, theta_u, theta_p, phi, noise_u, noise_p):
    """Posterior over the pre-corruption class pair, by full marginalization."""
    joint = _joint(u, p, w, theta_u, theta_p, phi, noise_u, noise_p)
    marginal = joint.sum(axis=(2, 3))
    return marginal / marginal.sum()

def posterior_corrupted(u, p, w, theta_u, theta_p, phi, noise_u, noise_p):
    """Posterior over the post-corruption class pair."""
    joint = _joint(u, p, w, theta_u, theta_p, phi, noise_u, noise_p)
    marginal = joint.sum(axis=(0, 1))
    return marginal / marginal.sum()


def em_step(tokens, theta_u, theta_p, phi, noise_u, noise_p):
    """One EM sweep applying the closed-form updates term by term.

    Returns (theta_u', theta_p', phi', log-likelihood of the incoming
    parameters).  Class pairs with zero accumulated mass keep their word
    distribution; users/products with no tokens keep their prior row.
    """
    n_users, K = theta_u.shape
    n_products, L = theta_p.shape
    n_words = phi.shape[0]

    phi_acc = np.zeros_like(phi)
    user_acc = np.zeros_like(theta_u)
    product_acc = np.zeros_like(theta_p)
    user_tokens = np.zeros(n_users)
    product_tokens = np.zeros(n_products)
    loglik = 0.0

    for u, p, w, count in tokens:
        post_y = posterior_corrupted(u, p, w, theta_u, theta_p, phi, noise_u, noise_p)
        post_z = posterior_original(u, p, w, theta_u, theta_p, phi, noise_u, noise_p)
        loglik += count * math.log(
            token_word_probability(u, p, w, theta_u, theta_p, phi, noise_u, noise_p)
        )
        for k2 in range(K):
            for l2 in range(L):
                phi_acc[w][k2][l2] += count * post_y[k2][l2]
        for k in range(K):
            user_acc[u][k] += count * sum(post_z[k][l] for l in range(L))
        for l in range(L):
            product_acc[p][l] += count * sum(post_z[k][l] for k in range(K))
        user_tokens[u] += count
        product_tokens[p] += count

    new_theta_u = theta_u.copy()
    for u in range(n_users):
        if user_tokens[u] > 0:
            new_theta_u[u] = user_acc[u] / user_tokens[u]
    new_theta_p = theta_p.copy()
    for p in range(n_products):
        if product_tokens[p] > 0:
            new_theta_p[p] = product_acc[p] / product_tokens[p]
    new_phi = phi.copy()
    for k2 in range(K):
        for l2 in range(L):
            total = sum(phi_acc[w][k2][l2] for w in range(n_words))
            if total > 0:
                for w in range(n_words):
                    new_phi[w][k2][l2] = phi_acc[w][k2][l2] / total
    return new_theta_u, new_theta_p, new_phi, loglik


def flat_em_step(tokens, theta_u, theta_p, phi):
    """Topology-free two-sided latent class EM (no channel noise at all)."""
    n_users, K = theta_u.shape
    n_products, L = theta_p.shape
    n_words = phi.shape[0]
    phi_acc = np.zeros_like(phi)
    user_acc = np.zeros_like(theta_u)
    product_acc = np.zeros_like(theta_p)
    user_tokens = np.zeros(n_users)
    product_tokens = np.zeros(n_products)
    for u, p, w, count in tokens:
        post = np.zeros((K, L))
        for k in range(K):
            for l in range(L):
                post[k][l] = theta_u[u][k] * theta_p[p][l] * phi[w][k][l]
        post /= post.sum()
        phi_acc[w] += count * post
        user_acc[u] += count * post.sum(axis=1)
        product_acc[p] += count * post.sum(axis=0)
        user_tokens[u] += count
        product_tokens[p] += count
    new_theta_u = np.where(
        user_tokens[:, None] > 0, user_acc / np.maximum(user_tokens[:, None], 1e-300), theta_u
    )
    new_theta_p = np.where(
        product_tokens[:, None] > 0,
        product_acc / np.maximum(product_tokens[:, None], 1e-300),
        theta_p,
    )
    totals = phi_acc.sum(axis=0, keepdims=True)
    new_phi = np.where(totals > 0, phi_acc / np.maximum(totals, 1e-300), phi)
    return new_theta_u, new_theta_p, new_phi


def ridge_pinv(features, targets, lam):
    """Pseudo-inverse solve of the ridge normal equations (bias last, free)."""
    features = np.asarray(features, dtype=float)
    penalty = lam * np.eye(features.shape[1])
    penalty[-1, -1] = 0.0
    return np.linalg.pinv(features.T @ features + penalty) @ features.T @ targets


def jensen_shannon(p, q):
    """JS divergence (natural log) between two distributions."""
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    m = 0.5 * (p + q)

    def kl(a, b):
        mask = a > 0
        return float(np.sum(a[mask] * np.log(a[mask] / b[mask])))

    return 0.5 * kl(p, m) + 0.5 * kl(q, m)
