"""Replicate aggregation and paired true-vs-intercept comparisons."""
from __future__ import annotations

import enum
import logging
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy import stats as _st

from .complexity import EstimationError, FFNNProcedure, gdf_horizontal, p_cv
from .ffnn import Dataset, ModelConfig
from .seeding import child_rng, child_seed

logger = logging.getLogger(__name__)


class DeltaLabel(str, enum.Enum):
    DELTA_GDF = "delta_gdf"
    DELTA_PCV = "delta_pcv"


@dataclass(frozen=True)
class PairedSample:
    """Per-iteration differences ``true - intercept`` plus the two arms."""

    diffs: np.ndarray
    label: DeltaLabel
    true: np.ndarray | None = field(default=None, compare=False)
    intercept: np.ndarray | None = field(default=None, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "diffs", np.asarray(self.diffs, dtype=float))
        object.__setattr__(self, "label", DeltaLabel(self.label))


def mean_se(samples) -> tuple[float, float]:
    x = np.asarray(samples, dtype=float).reshape(-1)
    if x.size < 2:
        raise ValueError("need at least two samples")
    return float(x.mean()), float(x.std(ddof=1) / math.sqrt(x.size))


def t_quantile(prob: float, df: int) -> float:
    return float(_st.t.ppf(prob, df))


def paired_t_ci(sample: PairedSample, level: float = 0.95) -> tuple[float, float]:
    """Centre and half-width of the paired-t interval for the mean difference."""
    if not 0 < level < 1:
        raise ValueError("level must lie in (0, 1)")
    d = sample.diffs
    if d.size < 2:
        raise ValueError("need at least two paired differences")
    centre, se = mean_se(d)
    if se == 0.0:
        return centre, 0.0
    return centre, t_quantile(1 - (1 - level) / 2, d.size - 1) * se


Generator = Callable[[np.random.Generator], Dataset]


def paired_delta_run(
    true_gen: Generator,
    intercept_gen: Generator,
    config: ModelConfig,
    iterations: int,
    seed: int,
    k: int | None = None,
    K: int = 10,
    N: int = 100,
    threads: int | None = None,
) -> tuple[PairedSample, PairedSample]:
    """Seed-matched GDF and p_cv differences between two data generators.

    Within an iteration both arms draw their data from the same stream and
    use the same estimator seed, so the network initialisations coincide
    fit for fit.  An iteration where either arm fails is dropped from both.
    """

    def arm(gen, it):
        data = gen(child_rng(seed, it, "data"))
        est_seed = child_seed(seed, it, "estimators")
        proc = FFNNProcedure(data.X, config)
        g = gdf_horizontal(proc, data, k=k, N=N, seed=est_seed, threads=threads).value
        c = p_cv(proc, data, K=K, N=N, seed=est_seed, threads=threads).value
        return g, c

    def one(it):
        try:
            return arm(true_gen, it), arm(intercept_gen, it)
        except (EstimationError, ValueError) as exc:
            logger.warning("iteration %d dropped: %s", it, exc)
            return None

    results = [r for r in (one(it) for it in range(iterations)) if r is not None]
    if len(results) < 2:
        raise EstimationError("fewer than two paired iterations succeeded")
    arr = np.array([[t[0], t[1], i[0], i[1]] for t, i in results])
    dgdf = PairedSample(arr[:, 0] - arr[:, 2], DeltaLabel.DELTA_GDF, arr[:, 0], arr[:, 2])
    dpcv = PairedSample(arr[:, 1] - arr[:, 3], DeltaLabel.DELTA_PCV, arr[:, 1], arr[:, 3])
    return dgdf, dpcv
