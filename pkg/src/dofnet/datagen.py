"""Synthetic data for the simulation studies."""
from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .ffnn import Dataset, ParamVector, predict_all


class Scenario(str, enum.Enum):
    BINARY = "binary_inputs"
    CONTINUOUS = "continuous_inputs"
    MIXED = "mixed_inputs"

    @classmethod
    def parse(cls, value) -> "Scenario":
        """Accept an enum value, its name, or the scenario number 1-3."""
        if isinstance(value, cls):
            return value
        numbered = {"1": cls.BINARY, "2": cls.CONTINUOUS, "3": cls.MIXED}
        text = str(value).strip().lower()
        if text in numbered:
            return numbered[text]
        for member in cls:
            if text in (member.value, member.name.lower()):
                return member
        raise ValueError(f"unknown scenario {value!r}")

    @property
    def number(self) -> int:
        return list(Scenario).index(self) + 1


@dataclass(frozen=True)
class ScenarioSpec:
    scenario: Scenario
    n: int
    p: int
    m: int | None = None
    prevalence: float = 0.3

    def __post_init__(self):
        object.__setattr__(self, "scenario", Scenario.parse(self.scenario))
        if self.n < 1 or self.p < 0:
            raise ValueError("need n >= 1 and p >= 0")
        if not 0 < self.prevalence < 1:
            raise ValueError("prevalence must lie strictly between 0 and 1")
        if self.scenario is Scenario.MIXED:
            m = self.p // 2 if self.m is None else self.m
            if not 0 < m < self.p:
                raise ValueError(f"mixed inputs need 0 < m < p, got m={m}, p={self.p}")
            object.__setattr__(self, "m", m)


@dataclass(frozen=True)
class TrueModelSpec:
    n: int
    p: int
    H: int
    weight_scale: float = 1.0

    def __post_init__(self):
        if not self.weight_scale > 0:
            raise ValueError("weight_scale must be positive")


def gen_scenario(spec: ScenarioSpec, rng: np.random.Generator) -> Dataset:
    """Null data: ``y ~ Bern(prevalence)`` drawn independently of the inputs."""
    n, p = spec.n, spec.p
    if spec.scenario is Scenario.BINARY:
        X = rng.binomial(1, 0.5, size=(n, p)).astype(float)
    elif spec.scenario is Scenario.CONTINUOUS:
        X = rng.standard_normal((n, p))
    else:
        X = np.empty((n, p))
        X[:, : spec.m] = rng.binomial(1, 0.5, size=(n, spec.m))
        X[:, spec.m :] = rng.standard_normal((n, p - spec.m))
    y = rng.binomial(1, spec.prevalence, size=n).astype(float)
    return Dataset(X, y)


def gen_true_model(spec: TrueModelSpec, rng: np.random.Generator) -> tuple[Dataset, ParamVector]:
    """Outcomes drawn from a random network with output intercept fixed at 1.

    All other weights, hidden intercepts included, are N(0, s) with ``s`` the
    variance ``weight_scale``.
    """
    sd = np.sqrt(spec.weight_scale)
    v = np.concatenate([[1.0], rng.normal(0.0, sd, size=spec.H)])
    w = rng.normal(0.0, sd, size=(spec.H, spec.p + 1))
    theta = ParamVector(v, w)
    X = rng.standard_normal((spec.n, spec.p))
    prob = predict_all(theta, X)
    y = (rng.random(spec.n) < prob).astype(float)
    return Dataset(X, y), theta


def gen_intercept_only(n: int, p: int, prob: float, rng: np.random.Generator) -> Dataset:
    if not 0 < prob < 1:
        raise ValueError("prob must lie strictly between 0 and 1")
    X = rng.standard_normal((n, p))
    y = rng.binomial(1, prob, size=n).astype(float)
    return Dataset(X, y)
