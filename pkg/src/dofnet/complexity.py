"""Model-complexity estimators for binary-response modelling procedures.

Three estimators are provided:

* :func:`gdf_vertical` and :func:`gdf_horizontal` measure generalized degrees
  of freedom by flipping responses 0 <-> 1 and tracking how the fitted values
  react;
* :func:`p_cv` takes the gap between in-sample and stratified K-fold
  cross-validated log-likelihood;
* :func:`null_dof` averages the likelihood-ratio statistic over datasets
  drawn from a null generator.

Every fit draws its seed from ``(seed, replicate, step)`` so estimates are
reproducible and do not depend on the thread count.
"""
from __future__ import annotations

import abc
import enum
import logging
import math
import warnings
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.special import xlogy

from .ffnn import EPS, Dataset, FitError, ModelConfig, bernoulli_loglik, fit
from .parallel import pmap
from .seeding import child_rng, child_seed

logger = logging.getLogger(__name__)

MAX_DISCARD_FRACTION = 0.2


class EstimationError(RuntimeError):
    pass


class Method(str, enum.Enum):
    GDF_VERTICAL = "gdf_vertical"
    GDF_HORIZONTAL = "gdf_horizontal"
    P_CV = "p_cv"
    NULL_DOF = "null_dof"


@dataclass(frozen=True)
class ComplexityEstimate:
    value: float
    std_error: float
    method: Method
    internal_reps: int
    detail: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        if not self.std_error >= 0:
            raise ValueError("std_error must be non-negative")
        if self.internal_reps < 1:
            raise ValueError("internal_reps must be at least 1")

    def as_dict(self) -> dict:
        return {
            "method": Method(self.method).value,
            "value": self.value,
            "std_error": self.std_error,
            "internal_reps": self.internal_reps,
            **self.detail,
        }


# --------------------------------------------------------------------------
# modelling procedures


@dataclass(frozen=True)
class ProcedureFit:
    fitted: np.ndarray
    loglik: float
    predictor: Callable[[np.ndarray], np.ndarray] = field(repr=False, compare=False)

    def predict(self, rows) -> np.ndarray:
        return self.predictor(np.asarray(rows))


class ModelingProcedure(abc.ABC):
    """A map from a response vector to fitted probabilities, covariates fixed.

    ``fit(y, seed, rows)`` trains on the entries of ``y`` listed in ``rows``
    (all of them by default) and returns fitted values for those rows.
    """

    n: int

    @abc.abstractmethod
    def fit(self, y: np.ndarray, seed: int, rows: np.ndarray | None = None) -> ProcedureFit: ...


class FFNNProcedure(ModelingProcedure):
    def __init__(self, X, config: ModelConfig):
        self.X = np.ascontiguousarray(np.asarray(X, dtype=float))
        self.n = self.X.shape[0]
        self.config = config

    def fit(self, y, seed, rows=None):
        X = self.X if rows is None else self.X[rows]
        yy = np.asarray(y, dtype=float) if rows is None else np.asarray(y, dtype=float)[rows]
        res = fit(Dataset(X, yy), self.config, np.random.default_rng(seed))
        return ProcedureFit(res.fitted, res.loglik, lambda r: res.predict(self.X[r]))


class ConstantMeanProcedure(ModelingProcedure):
    """Predicts the training prevalence everywhere.

    As with :class:`IdentityProcedure` the fitted values are not clamped, so
    a flip moves every fitted value by exactly ``Delta_i / n`` even when the
    flipped response has a single class; likelihoods are clamped.
    """

    def __init__(self, n: int):
        self.n = n

    def fit(self, y, seed, rows=None):
        yy = np.asarray(y, dtype=float)
        if rows is not None:
            yy = yy[rows]
        mean = yy.sum() / yy.size
        fitted = np.full(yy.size, mean)
        return ProcedureFit(
            fitted,
            bernoulli_loglik(yy, fitted),
            lambda r: np.full(len(r), min(max(mean, EPS), 1.0 - EPS)),
        )


class IdentityProcedure(ModelingProcedure):
    """Returns the responses themselves.

    Fitted values are left unclamped so that one flip moves its own fitted
    value by exactly one; the log-likelihood is computed with clamping.
    """

    def __init__(self, n: int):
        self.n = n

    def fit(self, y, seed, rows=None):
        yy = np.asarray(y, dtype=float)
        if rows is not None:
            yy = yy[rows]
        fitted = yy.copy()
        return ProcedureFit(fitted, bernoulli_loglik(yy, fitted), lambda r: np.full(len(r), 0.5))


def _safe_fit(proc: ModelingProcedure, y, seed, rows=None) -> ProcedureFit | None:
    try:
        return proc.fit(y, seed, rows)
    except (FitError, FloatingPointError) as exc:
        logger.warning("fit failed (seed %d): %s", seed, exc)
        return None


def _check_discards(failed: int, total: int, what: str):
    if total and failed / total > MAX_DISCARD_FRACTION:
        raise EstimationError(f"{failed} of {total} {what} discarded after fit failures")
    if failed:
        logger.warning("%d of %d %s discarded after fit failures", failed, total, what)


def _mean_se(values) -> tuple[float, float, float]:
    values = np.asarray(values, dtype=float)
    mean = float(values.mean())
    if values.size < 2:
        return mean, 0.0, 0.0
    sd = float(values.std(ddof=1))
    return mean, sd / math.sqrt(values.size), sd


def _binary(y) -> np.ndarray:
    y = np.asarray(y, dtype=float).reshape(-1)
    if not np.all((y == 0) | (y == 1)):
        raise ValueError("responses must be 0/1")
    return y


# --------------------------------------------------------------------------
# generalized degrees of freedom


def default_flips(n: int) -> int:
    """Ten percent of the sample, rounded, at least one."""
    return max(1, int(math.floor(0.1 * n + 0.5)))


def gdf_vertical(
    proc: ModelingProcedure,
    data: Dataset,
    N: int = 100,
    seed: int = 0,
    threads: int | None = None,
) -> ComplexityEstimate:
    """Monte Carlo GDF from single-response flips.

    Each replicate fits the unperturbed response once, then visits the
    indices in a random order, flipping one response at a time and adding
    ``(yhat'_i - yhat_i) / Delta_i`` with ``Delta_i = (-1)**y_i``.
    """
    if N < 1:
        raise ValueError("N must be at least 1")
    y = _binary(data.y)
    n = y.size
    if n < 1:
        raise ValueError("empty response")
    direction = 1.0 - 2.0 * y

    def replicate(j):
        order = child_rng(seed, j, "order").permutation(n)
        base = _safe_fit(proc, y, child_seed(seed, j, 0))
        if base is None:
            return None
        total = 0.0
        for t, i in enumerate(order):
            y_pert = y.copy()
            y_pert[i] = 1.0 - y[i]
            res = _safe_fit(proc, y_pert, child_seed(seed, j, t + 1))
            if res is None:
                return None
            total += (res.fitted[i] - base.fitted[i]) / direction[i]
        return total

    sums = pmap(replicate, range(N), threads)
    kept = [s for s in sums if s is not None]
    _check_discards(N - len(kept), N, "replicates")
    if not kept:
        raise EstimationError("every replicate failed")
    value, se, sd = _mean_se(kept)
    return ComplexityEstimate(
        value, se, Method.GDF_VERTICAL, len(kept), {"k": 1, "sd": sd, "discarded": N - len(kept)}
    )


@dataclass(frozen=True)
class FlipSweep:
    """One pass over the sample in blocks of ``k`` flips.

    ``flip_sets`` partition ``0..n-1``; each perturbed vector is the original
    response with one block flipped.
    """

    y: np.ndarray
    flip_sets: tuple[np.ndarray, ...]

    def __len__(self):
        return len(self.flip_sets)

    def perturbed(self, step: int) -> np.ndarray:
        out = np.array(self.y, dtype=float)
        idx = self.flip_sets[step]
        out[idx] = 1.0 - out[idx]
        return out

    def vectors(self) -> list[np.ndarray]:
        return [self.perturbed(t) for t in range(len(self))]


def flip_sweep(y, k: int, rng: np.random.Generator) -> FlipSweep:
    y = _binary(y)
    n = y.size
    if not 1 <= k <= n:
        raise ValueError(f"k must lie in [1, {n}], got {k}")
    order = rng.permutation(n)
    return FlipSweep(y, tuple(order[s : s + k] for s in range(0, n, k)))


def _row_slopes(sx, sy, sxx, sxy, count):
    vx = sxx - sx * sx / count
    if np.any(vx <= 0):
        bad = int(np.flatnonzero(vx <= 0)[0])
        raise EstimationError(f"perturbed responses for observation {bad} have zero variance")
    return (sxy - sx * sy / count) / vx


def gdf_horizontal(
    proc: ModelingProcedure,
    data: Dataset,
    k: int | None = None,
    N: int = 100,
    seed: int = 0,
    threads: int | None = None,
) -> ComplexityEstimate:
    """GDF as the sum of per-observation regression slopes.

    ``N`` sweeps of :func:`flip_sweep` give ``N * ceil(n/k)`` perturbed
    response columns.  For each observation the fitted values are regressed
    on the perturbed responses across all columns; the slopes are summed.
    The standard error is a delete-one-sweep jackknife.
    """
    y = _binary(data.y)
    n = y.size
    k = default_flips(n) if k is None else int(k)
    if not 1 <= k <= n:
        raise ValueError(f"k must lie in [1, {n}], got {k}")
    if N < 2:
        raise ValueError("N must be at least 2")
    steps = -(-n // k)
    sweeps = [flip_sweep(y, k, child_rng(seed, r, "sweep")) for r in range(N)]

    def column(task):
        r, t = task
        res = _safe_fit(proc, sweeps[r].perturbed(t), child_seed(seed, r, t + 1))
        return None if res is None else res.fitted

    tasks = [(r, t) for r in range(N) for t in range(steps)]
    fitted = pmap(column, tasks, threads)
    failed = sum(f is None for f in fitted)
    _check_discards(failed, len(tasks), "perturbation fits")

    # per-sweep sufficient statistics, shape (N, n)
    sx = np.zeros((N, n))
    sy = np.zeros((N, n))
    sxx = np.zeros((N, n))
    sxy = np.zeros((N, n))
    cnt = np.zeros(N)
    for (r, t), yhat in zip(tasks, fitted):
        if yhat is None:
            continue
        ys = sweeps[r].perturbed(t)
        sx[r] += ys
        sy[r] += yhat
        sxx[r] += ys * ys
        sxy[r] += ys * yhat
        cnt[r] += 1

    live = np.flatnonzero(cnt > 0)
    tot = [a[live].sum(axis=0) for a in (sx, sy, sxx, sxy)]
    c = cnt[live].sum()
    slopes = _row_slopes(*tot, c)
    value = float(slopes.sum())

    jack = []
    for r in live:
        loo = [T - a[r] for T, a in zip(tot, (sx, sy, sxx, sxy))]
        jack.append(_row_slopes(*loo, c - cnt[r]).sum())
    jack = np.asarray(jack)
    m = jack.size
    se = float(np.sqrt((m - 1) / m * np.sum((jack - jack.mean()) ** 2))) if m > 1 else 0.0
    return ComplexityEstimate(
        value,
        se,
        Method.GDF_HORIZONTAL,
        int(m),
        {"k": k, "columns": int(c), "discarded": int(failed)},
    )


# --------------------------------------------------------------------------
# cross-validated effective number of parameters


def stratified_folds(y, K: int, rng: np.random.Generator) -> np.ndarray:
    """Fold labels ``0..K-1`` that keep the class balance in every fold.

    Each class is shuffled and dealt round-robin; the deal for the ones picks
    up where the zeros stopped, so total fold sizes also differ by at most one.
    """
    y = _binary(y)
    n = y.size
    if not 2 <= K <= n:
        raise ValueError(f"K must lie in [2, {n}], got {K}")
    zeros = np.flatnonzero(y == 0)
    ones = np.flatnonzero(y == 1)
    if zeros.size == 0 or ones.size == 0:
        raise ValueError("both classes must be present")
    if K > min(zeros.size, ones.size):
        warnings.warn(f"K={K} exceeds a class size; some folds will miss that class", stacklevel=2)
    folds = np.empty(n, dtype=np.int64)
    folds[rng.permutation(zeros)] = np.arange(zeros.size) % K
    folds[rng.permutation(ones)] = (zeros.size + np.arange(ones.size)) % K
    return folds


def _cv_replicate(proc, y, K, seed, r, with_full=True):
    folds = stratified_folds(y, K, child_rng(seed, r, "folds"))
    lcv = 0.0
    for f in range(K):
        test = np.flatnonzero(folds == f)
        train = np.flatnonzero(folds != f)
        res = _safe_fit(proc, y, child_seed(seed, r, f + 1), train)
        if res is None:
            return None
        lcv += bernoulli_loglik(y[test], res.predict(test))
    if not with_full:
        return lcv, math.nan
    full = _safe_fit(proc, y, child_seed(seed, r, 0))
    if full is None:
        return None
    return lcv, full.loglik


def _require_both_classes(y):
    if y.min() == y.max():
        raise ValueError("cross-validation needs both response classes")


def cv_loglik(
    proc: ModelingProcedure,
    data: Dataset,
    K: int = 10,
    N: int = 100,
    seed: int = 0,
    threads: int | None = None,
) -> np.ndarray:
    """Cross-validated log-likelihood for each of ``N`` stratified fold draws."""
    y = _binary(data.y)
    _require_both_classes(y)
    out = pmap(lambda r: _cv_replicate(proc, y, K, seed, r, with_full=False), range(N), threads)
    kept = [o[0] for o in out if o is not None]
    _check_discards(N - len(kept), N, "cross-validation replicates")
    if not kept:
        raise EstimationError("every cross-validation replicate failed")
    return np.asarray(kept)


def p_cv(
    proc: ModelingProcedure,
    data: Dataset,
    K: int = 10,
    N: int = 100,
    seed: int = 0,
    threads: int | None = None,
) -> ComplexityEstimate:
    """In-sample minus K-fold cross-validated log-likelihood.

    Negative values are returned as they are.  ``detail`` also carries the
    mean and spread of the cross-validated negative log-likelihood.
    """
    if K < 2:
        raise ValueError("K must be at least 2")
    if N < 1:
        raise ValueError("N must be at least 1")
    y = _binary(data.y)
    _require_both_classes(y)
    out = pmap(lambda r: _cv_replicate(proc, y, K, seed, r), range(N), threads)
    kept = [o for o in out if o is not None]
    _check_discards(N - len(kept), N, "cross-validation replicates")
    if not kept:
        raise EstimationError("every cross-validation replicate failed")
    lcv = np.array([o[0] for o in kept])
    lm = np.array([o[1] for o in kept])
    value, se, sd = _mean_se(lm - lcv)
    nl_mean, nl_se, nl_sd = _mean_se(-lcv)
    return ComplexityEstimate(
        value,
        se,
        Method.P_CV,
        len(kept),
        {
            "K": K,
            "sd": sd,
            "neg_lcv": nl_mean,
            "neg_lcv_se": nl_se,
            "neg_lcv_sd": nl_sd,
            "loglik_full": float(lm.mean()),
            "discarded": N - len(kept),
        },
    )


# --------------------------------------------------------------------------
# likelihood-ratio statistic and null degrees of freedom


def lrt_statistic(y, yhat) -> float:
    """``2 (loglik_fitted - loglik_null)`` with the prevalence as null fit.

    May be negative for penalised fits.  Null terms use ``0 log 0 = 0``.
    """
    y = np.asarray(y, dtype=float).reshape(-1)
    yhat = np.asarray(yhat, dtype=float).reshape(-1)
    if y.shape != yhat.shape:
        raise ValueError(f"length mismatch: {y.size} responses, {yhat.size} predictions")
    n = y.size
    n1 = float(y.sum())
    n0 = n - n1
    fitted = np.sum(xlogy(y, yhat) + xlogy(1 - y, 1 - yhat))
    return float(2.0 * (fitted - xlogy(n1, n1) - xlogy(n0, n0) + xlogy(n, n)))


def null_dof(
    procedure: Callable[[Dataset], ModelingProcedure],
    generator: Callable[[np.random.Generator], Dataset],
    reps: int = 100,
    seed: int = 0,
    threads: int | None = None,
) -> ComplexityEstimate:
    """Mean likelihood-ratio statistic over ``reps`` generated datasets.

    ``procedure`` builds a modelling procedure for a dataset's covariates.
    A single-class dataset contributes a statistic of zero.
    """
    if reps < 2:
        raise ValueError("reps must be at least 2")

    def one(r):
        data = generator(child_rng(seed, r, "data"))
        if data.n1 == 0 or data.n0 == 0:
            return 0.0
        res = _safe_fit(procedure(data), data.y, child_seed(seed, r, "fit"))
        return None if res is None else lrt_statistic(data.y, res.fitted)

    stats = pmap(one, range(reps), threads)
    kept = [s for s in stats if s is not None]
    _check_discards(reps - len(kept), reps, "datasets")
    value, se, sd = _mean_se(kept)
    return ComplexityEstimate(
        value, se, Method.NULL_DOF, len(kept), {"sd": sd, "discarded": reps - len(kept)}
    )
