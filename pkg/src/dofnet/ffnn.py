"""Single-hidden-layer feed-forward network for binary outcomes.

The network maps inputs ``x`` to ``expit(v0 + sum_j v_j expit(w_j0 + w_j . x))``
and is trained by minimising a fit criterion plus ``decay * ||theta||^2``,
where the penalty runs over every weight including the intercepts.
"""
from __future__ import annotations

import enum
import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import xlogy

from . import _kernels

logger = logging.getLogger(__name__)

EPS = 1e-12


class Criterion(str, enum.Enum):
    ENTROPY = "entropy"
    LEAST_SQUARES = "least-squares"

    @property
    def code(self) -> int:
        return _kernels.ENTROPY if self is Criterion.ENTROPY else _kernels.LEAST_SQUARES


class NumericError(FloatingPointError):
    """A non-finite value appeared where a finite one is required."""

    def __init__(self, message: str, index: int | None = None):
        super().__init__(message)
        self.index = index


class FitError(RuntimeError):
    """Training failed twice in a row with a non-finite objective."""


def n_params(p: int, H: int) -> int:
    return (p + 2) * H + 1


@dataclass(frozen=True)
class ParamVector:
    """Network weights.

    ``v`` has length H+1 with the output intercept first; ``w`` is H x (p+1)
    with the hidden intercepts in column 0.  :meth:`flatten` orders the
    entries as ``(v, w[:, 0], w[:, 1], ..., w[:, p])``.
    """

    v: np.ndarray
    w: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.v, dtype=float).reshape(-1)
        w = np.asarray(self.w, dtype=float)
        if w.ndim != 2:
            raise ValueError("w must be a 2-d array of shape (H, p+1)")
        if v.shape[0] != w.shape[0] + 1:
            raise ValueError(f"v has length {v.shape[0]}, expected H+1 = {w.shape[0] + 1}")
        if w.shape[0] < 1 or w.shape[1] < 1:
            raise ValueError("need at least one hidden unit and a bias column")
        object.__setattr__(self, "v", v)
        object.__setattr__(self, "w", w)

    @property
    def hidden_units(self) -> int:
        return self.w.shape[0]

    @property
    def n_inputs(self) -> int:
        return self.w.shape[1] - 1

    @property
    def size(self) -> int:
        return self.v.size + self.w.size

    def flatten(self) -> np.ndarray:
        return np.concatenate([self.v, self.w.T.reshape(-1)])

    @classmethod
    def from_flat(cls, theta, p: int, H: int) -> "ParamVector":
        theta = np.asarray(theta, dtype=float).reshape(-1)
        if theta.size != n_params(p, H):
            raise ValueError(f"theta has length {theta.size}, expected (p+2)H+1 = {n_params(p, H)}")
        v = theta[: H + 1].copy()
        w = theta[H + 1 :].reshape(p + 1, H).T.copy()
        return cls(v, w)

    @classmethod
    def zeros(cls, p: int, H: int) -> "ParamVector":
        return cls(np.zeros(H + 1), np.zeros((H, p + 1)))


@dataclass(frozen=True)
class Dataset:
    """Covariates ``X`` (n x p) and a 0/1 response ``y``.

    ``feature_names`` labels the columns of ``X``; ``groups`` maps a
    covariate name to the columns it occupies (a dummy-coded factor spans
    several columns).
    """

    X: np.ndarray
    y: np.ndarray
    feature_names: tuple[str, ...] | None = None
    groups: dict[str, tuple[int, ...]] | None = field(default=None, compare=False)

    def __post_init__(self):
        y = np.asarray(self.y, dtype=float).reshape(-1)
        X = np.asarray(self.X, dtype=float)
        if X.ndim == 1:
            X = X.reshape(-1, 1) if X.size else np.empty((y.size, 0))
        if X.shape[0] != y.shape[0]:
            raise ValueError(f"X has {X.shape[0]} rows but y has {y.shape[0]} entries")
        if not np.all((y == 0.0) | (y == 1.0)):
            raise ValueError("y entries must be exactly 0 or 1")
        if not np.all(np.isfinite(X)):
            raise ValueError("X contains non-finite entries")
        if self.feature_names is not None and len(self.feature_names) != X.shape[1]:
            raise ValueError("feature_names length does not match X columns")
        X = np.ascontiguousarray(X)
        X.setflags(write=False)
        y.setflags(write=False)
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "y", y)
        if self.feature_names is not None:
            object.__setattr__(self, "feature_names", tuple(self.feature_names))

    @property
    def n(self) -> int:
        return self.y.shape[0]

    @property
    def p(self) -> int:
        return self.X.shape[1]

    @property
    def n1(self) -> int:
        return int(self.y.sum())

    @property
    def n0(self) -> int:
        return self.n - self.n1

    @property
    def prevalence(self) -> float:
        return self.n1 / self.n

    def with_response(self, y) -> "Dataset":
        return Dataset(self.X, y, self.feature_names, self.groups)

    def subset_rows(self, rows) -> "Dataset":
        rows = np.asarray(rows)
        return Dataset(self.X[rows], self.y[rows], self.feature_names, self.groups)

    def select(self, covariates) -> "Dataset":
        """Keep only the named covariates (whole groups), in the given order."""
        covariates = list(covariates)
        groups = self.groups
        if groups is None:
            names = self.feature_names or ()
            groups = {name: (i,) for i, name in enumerate(names)}
        cols: list[int] = []
        new_groups: dict[str, tuple[int, ...]] = {}
        for name in covariates:
            if name not in groups:
                raise KeyError(f"unknown covariate {name!r}")
            idx = groups[name]
            new_groups[name] = tuple(range(len(cols), len(cols) + len(idx)))
            cols.extend(idx)
        names = None
        if self.feature_names is not None:
            names = tuple(self.feature_names[c] for c in cols)
        return Dataset(self.X[:, cols], self.y, names, new_groups)


@dataclass(frozen=True)
class ModelConfig:
    hidden_units: int
    decay: float = 0.0
    criterion: Criterion = Criterion.ENTROPY
    max_iterations: int = 1000
    gradient_tolerance: float = 1e-8
    # relative objective-change stop, as in nnet's default reltol
    rel_tolerance: float = 1e-8
    init_range: float = 0.7
    standardize: bool = False
    seed: int = 0

    def __post_init__(self):
        if int(self.hidden_units) != self.hidden_units or self.hidden_units < 1:
            raise ValueError("hidden_units must be a positive integer")
        if not self.decay >= 0:
            raise ValueError("decay must be non-negative")
        if int(self.max_iterations) != self.max_iterations or self.max_iterations < 1:
            raise ValueError("max_iterations must be a positive integer")
        if not self.gradient_tolerance > 0:
            raise ValueError("gradient_tolerance must be positive")
        if not self.rel_tolerance >= 0:
            raise ValueError("rel_tolerance must be non-negative")
        if not self.init_range > 0:
            raise ValueError("init_range must be positive")
        object.__setattr__(self, "criterion", Criterion(self.criterion))


@dataclass(frozen=True)
class FitResult:
    theta_hat: ParamVector
    fitted: np.ndarray
    loglik: float
    objective: float
    converged: bool
    iterations: int
    # (mean, sd) per column when inputs were z-scored before training
    scaling: tuple[np.ndarray, np.ndarray] | None = field(default=None, compare=False)

    def predict(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        if self.scaling is not None:
            X = (X - self.scaling[0]) / self.scaling[1]
        return predict_all(self.theta_hat, X)


def _as_flat(theta, p: int | None = None) -> tuple[np.ndarray, int, int]:
    if isinstance(theta, ParamVector):
        if p is not None and theta.n_inputs != p:
            raise ValueError(f"network expects {theta.n_inputs} inputs, got {p}")
        return np.ascontiguousarray(theta.flatten()), theta.n_inputs, theta.hidden_units
    raise TypeError("theta must be a ParamVector")


def forward(theta: ParamVector, x) -> float:
    """Unclamped output probability for a single input vector."""
    x = np.asarray(x, dtype=float).reshape(-1)
    flat, _, H = _as_flat(theta, x.size)
    return float(_kernels.predict(flat, x.reshape(1, -1), H)[0])


def predict_all(theta: ParamVector, X) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    if X.ndim != 2:
        raise ValueError("X must be 2-d")
    flat, p, H = _as_flat(theta, X.shape[1])
    out = _kernels.predict(flat, np.ascontiguousarray(X), H)
    return np.clip(out, EPS, 1.0 - EPS)


def _check_pair(y, yhat) -> tuple[np.ndarray, np.ndarray]:
    y = np.asarray(y, dtype=float).reshape(-1)
    yhat = np.asarray(yhat, dtype=float).reshape(-1)
    if y.shape != yhat.shape:
        raise ValueError(f"length mismatch: {y.size} responses, {yhat.size} predictions")
    return y, yhat


def entropy_criterion(y, yhat) -> float:
    """Bernoulli deviance form ``sum y log(y/yhat) + (1-y) log((1-y)/(1-yhat))``."""
    y, yhat = _check_pair(y, yhat)
    return float(
        np.sum(xlogy(y, y) - xlogy(y, yhat) + xlogy(1 - y, 1 - y) - xlogy(1 - y, 1 - yhat))
    )


def least_squares_criterion(y, yhat) -> float:
    y, yhat = _check_pair(y, yhat)
    r = y - yhat
    return float(r @ r)


def bernoulli_loglik(y, yhat) -> float:
    y, yhat = _check_pair(y, yhat)
    yhat = np.clip(yhat, EPS, 1.0 - EPS)
    return float(np.sum(xlogy(y, yhat) + xlogy(1 - y, 1 - yhat)))


def penalized_objective(theta: ParamVector, data: Dataset, config: ModelConfig) -> float:
    flat, _, H = _as_flat(theta, data.p)
    return float(
        _kernels.objective(flat, data.X, data.y, H, float(config.decay), config.criterion.code)
    )


def gradient(theta: ParamVector, data: Dataset, config: ModelConfig) -> np.ndarray:
    """Analytic gradient of :func:`penalized_objective` in the flat layout."""
    flat, _, H = _as_flat(theta, data.p)
    _, g = _kernels.objective_and_gradient(
        flat, data.X, data.y, H, float(config.decay), config.criterion.code
    )
    bad = np.flatnonzero(~np.isfinite(g))
    if bad.size:
        raise NumericError(f"non-finite gradient component at index {bad[0]}", int(bad[0]))
    return g


def init_weights(p: int, H: int, rng: np.random.Generator, init_range: float = 0.7) -> ParamVector:
    flat = rng.uniform(-init_range, init_range, size=n_params(p, H))
    return ParamVector.from_flat(flat, p, H)


def fit(data: Dataset, config: ModelConfig, rng: np.random.Generator | None = None) -> FitResult:
    """Train the network on ``data`` from a random start.

    ``rng`` defaults to a generator seeded with ``config.seed``.  A start
    whose objective is non-finite is retried once from a fresh draw.
    """
    if rng is None:
        rng = np.random.default_rng(config.seed)
    X = data.X
    scaling = None
    if config.standardize and data.p:
        mu = X.mean(axis=0)
        sd = X.std(axis=0)
        sd[sd == 0] = 1.0
        X = np.ascontiguousarray((X - mu) / sd)
        scaling = (mu, sd)
    H = config.hidden_units
    for attempt in range(2):
        theta0 = init_weights(data.p, H, rng, config.init_range)
        theta, f, status, iters = _kernels.bfgs(
            theta0.flatten(),
            X,
            data.y,
            H,
            float(config.decay),
            config.criterion.code,
            int(config.max_iterations),
            float(config.gradient_tolerance),
            float(config.rel_tolerance),
        )
        if status != _kernels.NONFINITE and math.isfinite(f):
            break
        logger.warning("non-finite objective on attempt %d, reinitialising", attempt + 1)
    else:
        raise FitError("objective was non-finite from two independent initialisations")

    theta_hat = ParamVector.from_flat(theta, data.p, H)
    fitted = predict_all(theta_hat, X)
    fitted.setflags(write=False)
    return FitResult(
        theta_hat=theta_hat,
        fitted=fitted,
        loglik=bernoulli_loglik(data.y, fitted),
        objective=float(f),
        converged=status in (_kernels.CONVERGED_GRADIENT, _kernels.CONVERGED_OBJECTIVE),
        iterations=int(iters),
        scaling=scaling,
    )
