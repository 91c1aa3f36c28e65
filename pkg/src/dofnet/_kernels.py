"""Compiled numerics for the one-hidden-layer logistic network.

All kernels work on the flat parameter layout ``(v_0..v_H, w_.0, w_.1, ..., w_.p)``
where ``w_.i`` holds the H weights leaving input ``i`` (``i = 0`` is the hidden
bias).  Loops are written out explicitly so results do not depend on BLAS
threading and are bit-reproducible.
"""
import math

import numpy as np
from numba import njit

ENTROPY = 0
LEAST_SQUARES = 1

# trainer status codes
CONVERGED_GRADIENT = 0
CONVERGED_OBJECTIVE = 1
MAX_ITERATIONS = 2
STALLED = 3
NONFINITE = 4

_ACCTOL = 1e-4
_STEPREDN = 0.2
_RELTEST = 10.0


@njit(cache=True, nogil=True)
def _expit(z):
    if z >= 0.0:
        return 1.0 / (1.0 + math.exp(-z))
    e = math.exp(z)
    return e / (1.0 + e)


@njit(cache=True, nogil=True)
def _softplus(z):
    # log(1 + exp(z)) without overflow
    if z > 0.0:
        return z + math.log1p(math.exp(-z))
    return math.log1p(math.exp(z))


@njit(cache=True, nogil=True)
def hidden_and_logits(theta, X, H):
    n, p = X.shape
    S = np.empty((n, H))
    z = np.empty(n)
    off = H + 1
    for k in range(n):
        acc = theta[0]
        for j in range(H):
            a = theta[off + j]
            for i in range(p):
                a += theta[off + (i + 1) * H + j] * X[k, i]
            s = _expit(a)
            S[k, j] = s
            acc += theta[1 + j] * s
        z[k] = acc
    return S, z


@njit(cache=True, nogil=True)
def predict(theta, X, H):
    _, z = hidden_and_logits(theta, X, H)
    out = np.empty(z.shape[0])
    for k in range(z.shape[0]):
        out[k] = _expit(z[k])
    return out


@njit(cache=True, nogil=True)
def objective(theta, X, y, H, decay, criterion):
    _, z = hidden_and_logits(theta, X, H)
    f = 0.0
    for k in range(z.shape[0]):
        if criterion == ENTROPY:
            # -[y log p + (1-y) log(1-p)] written in terms of the logit
            f += _softplus(z[k]) - y[k] * z[k]
        else:
            r = y[k] - _expit(z[k])
            f += r * r
    pen = 0.0
    for d in range(theta.shape[0]):
        pen += theta[d] * theta[d]
    return f + decay * pen


@njit(cache=True, nogil=True)
def objective_and_gradient(theta, X, y, H, decay, criterion):
    n, p = X.shape
    S, z = hidden_and_logits(theta, X, H)
    g = np.zeros(theta.shape[0])
    off = H + 1
    f = 0.0
    for k in range(n):
        mu = _expit(z[k])
        if criterion == ENTROPY:
            f += _softplus(z[k]) - y[k] * z[k]
            dz = mu - y[k]
        else:
            r = y[k] - mu
            f += r * r
            dz = -2.0 * r * mu * (1.0 - mu)
        g[0] += dz
        for j in range(H):
            s = S[k, j]
            g[1 + j] += dz * s
            dh = dz * theta[1 + j] * s * (1.0 - s)
            g[off + j] += dh
            for i in range(p):
                g[off + (i + 1) * H + j] += dh * X[k, i]
    pen = 0.0
    for d in range(theta.shape[0]):
        pen += theta[d] * theta[d]
        g[d] += 2.0 * decay * theta[d]
    return f + decay * pen, g


@njit(cache=True, nogil=True)
def bfgs(theta0, X, y, H, decay, criterion, max_iter, gtol, reltol):
    """Variable-metric minimiser with backtracking line search.

    Returns ``(theta, f, status, iterations)``.  A trial point is accepted
    only when it satisfies the Armijo condition, so the objective never
    increases between accepted iterates.
    """
    D = theta0.shape[0]
    x = theta0.copy()
    f, g = objective_and_gradient(x, X, y, H, decay, criterion)
    if not math.isfinite(f):
        return x, f, NONFINITE, 0
    for d in range(D):
        if not math.isfinite(g[d]):
            return x, f, NONFINITE, 0

    B = np.eye(D)
    t = np.empty(D)
    trial = np.empty(D)
    BX = np.empty(D)
    fresh = True
    it = 0
    while True:
        gmax = 0.0
        for d in range(D):
            a = abs(g[d])
            if a > gmax:
                gmax = a
        if gmax <= gtol:
            return x, f, CONVERGED_GRADIENT, it
        if it >= max_iter:
            return x, f, MAX_ITERATIONS, it
        it += 1

        gradproj = 0.0
        for i in range(D):
            s = 0.0
            for j in range(D):
                s -= B[i, j] * g[j]
            t[i] = s
            gradproj += s * g[i]

        if gradproj >= 0.0:
            if fresh:
                return x, f, STALLED, it
            B[:, :] = 0.0
            for d in range(D):
                B[d, d] = 1.0
            fresh = True
            continue

        step = 1.0
        accepted = False
        ftrial = f
        while True:
            same = 0
            for d in range(D):
                trial[d] = x[d] + step * t[d]
                if _RELTEST + x[d] == _RELTEST + trial[d]:
                    same += 1
            if same == D:
                break
            ftrial = objective(trial, X, y, H, decay, criterion)
            if math.isfinite(ftrial) and ftrial <= f + gradproj * step * _ACCTOL:
                accepted = True
                break
            step *= _STEPREDN

        if not accepted:
            if fresh:
                return x, f, STALLED, it
            B[:, :] = 0.0
            for d in range(D):
                B[d, d] = 1.0
            fresh = True
            continue

        small_change = abs(ftrial - f) <= reltol * (abs(f) + reltol)
        fnew, gnew = objective_and_gradient(trial, X, y, H, decay, criterion)
        d1 = 0.0
        for d in range(D):
            t[d] = step * t[d]
            d1 += t[d] * (gnew[d] - g[d])
        if d1 > 0.0:
            d2 = 0.0
            for i in range(D):
                s = 0.0
                for j in range(D):
                    s += B[i, j] * (gnew[j] - g[j])
                BX[i] = s
                d2 += (gnew[i] - g[i]) * s
            d2 = 1.0 + d2 / d1
            for i in range(D):
                for j in range(D):
                    B[i, j] += (d2 * t[i] * t[j] - BX[i] * t[j] - t[i] * BX[j]) / d1
            fresh = False
        else:
            B[:, :] = 0.0
            for d in range(D):
                B[d, d] = 1.0
            fresh = True
        for d in range(D):
            x[d] = trial[d]
            g[d] = gnew[d]
        f = fnew
        if small_change:
            return x, f, CONVERGED_OBJECTIVE, it
