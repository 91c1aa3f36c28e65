"""Shared fixtures and independent numpy oracles."""
import numpy as np
import pytest


def oracle_probs(v, w, X):
    """Plain numpy forward pass, written without the package kernels."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    a = w[:, 0][None, :] + X @ w[:, 1:].T
    hidden = 1.0 / (1.0 + np.exp(-a))
    return 1.0 / (1.0 + np.exp(-(v[0] + hidden @ v[1:])))


def oracle_objective(v, w, X, y, decay):
    q = oracle_probs(v, w, X)
    e = -np.sum(y * np.log(q) + (1 - y) * np.log(1 - q))
    return e + decay * (np.sum(v**2) + np.sum(w**2))


def central_difference(f, x, h=1e-6):
    g = np.empty_like(x)
    for i in range(x.size):
        up = x.copy()
        dn = x.copy()
        up[i] += h
        dn[i] -= h
        g[i] = (f(up) - f(dn)) / (2 * h)
    return g


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)
