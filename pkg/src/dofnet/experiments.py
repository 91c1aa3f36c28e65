"""Simulation and real-data studies built on the complexity estimators.

An :class:`ExperimentSpec` (loaded from a TOML spec file) names one of four
study kinds.  Each study is split into independent cells; finished cells are
cached under ``<output_dir>/cells`` so an interrupted run resumes where it
stopped, and the final CSV is assembled in a fixed order so reruns with the
same master seed produce identical bytes.
"""
from __future__ import annotations

import csv
import enum
import hashlib
import importlib.resources
import itertools
import json
import logging
import math
import os
import platform
import time
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from . import __version__
from .complexity import (
    EstimationError,
    FFNNProcedure,
    cv_loglik,
    default_flips,
    gdf_horizontal,
    gdf_vertical,
    null_dof,
    p_cv,
)
from .datagen import Scenario, ScenarioSpec, TrueModelSpec, gen_intercept_only, gen_scenario, gen_true_model
from .ffnn import Dataset, ModelConfig
from .seeding import child_rng, child_seed
from .stats import paired_delta_run, paired_t_ci

logger = logging.getLogger(__name__)


class ParseError(ValueError):
    def __init__(self, message: str, row: int | None = None, column: str | None = None):
        where = []
        if row is not None:
            where.append(f"row {row}")
        if column is not None:
            where.append(f"column {column!r}")
        super().__init__(f"{', '.join(where)}: {message}" if where else message)
        self.row = row
        self.column = column


# --------------------------------------------------------------------------
# real data


class Encoding(str, enum.Enum):
    NUMERIC = "numeric"
    BINARY = "binary"
    FACTOR = "factor"
    ORDERED = "ordered"


@dataclass(frozen=True)
class ColumnSpec:
    column: str
    kind: Encoding
    levels: tuple[str, ...] = ()
    reference_level: str | None = None

    def __post_init__(self):
        object.__setattr__(self, "kind", Encoding(self.kind))
        object.__setattr__(self, "levels", tuple(self.levels))
        if self.kind in (Encoding.BINARY, Encoding.FACTOR):
            if self.kind is Encoding.BINARY and len(self.levels) != 2:
                raise ValueError(f"{self.column}: binary columns need exactly two levels")
            if self.kind is Encoding.FACTOR and len(self.levels) < 2:
                raise ValueError(f"{self.column}: factor columns need at least two levels")
            ref = self.reference_level if self.reference_level is not None else self.levels[0]
            if ref not in self.levels:
                raise ValueError(f"{self.column}: reference level {ref!r} not among levels")
            object.__setattr__(self, "reference_level", ref)

    def output_names(self) -> list[str]:
        if self.kind is Encoding.FACTOR:
            return [f"{self.column}_{lvl}" for lvl in self.levels if lvl != self.reference_level]
        return [self.column]

    def encode(self, cell: str, row: int) -> list[float]:
        cell = cell.strip()
        if self.kind is Encoding.NUMERIC:
            try:
                value = float(cell)
            except ValueError:
                raise ParseError(f"non-numeric value {cell!r}", row, self.column) from None
            if not math.isfinite(value):
                raise ParseError(f"non-finite value {cell!r}", row, self.column)
            return [value]
        if self.kind is Encoding.ORDERED:
            if cell in self.levels:
                return [float(self.levels.index(cell))]
            if cell.isdigit():
                return [float(int(cell))]
            raise ParseError(f"unknown level {cell!r}", row, self.column)
        if cell not in self.levels:
            raise ParseError(f"unknown level {cell!r}", row, self.column)
        if self.kind is Encoding.BINARY:
            return [0.0 if cell == self.reference_level else 1.0]
        return [1.0 if cell == lvl else 0.0 for lvl in self.levels if lvl != self.reference_level]


@dataclass(frozen=True)
class RealDataSchema:
    response: str
    positive_level: str
    negative_level: str | None
    covariates: tuple[ColumnSpec, ...]

    @classmethod
    def from_toml(cls, path) -> "RealDataSchema":
        with open(path, "rb") as fh:
            raw = tomllib.load(fh)
        resp = raw["response"]
        return cls(
            response=resp["column"],
            positive_level=str(resp["positive_level"]),
            negative_level=None if "negative_level" not in resp else str(resp["negative_level"]),
            covariates=tuple(ColumnSpec(**c) for c in raw["covariates"]),
        )

    @property
    def names(self) -> list[str]:
        return [c.column for c in self.covariates]


def bundled_path(name: str) -> Path:
    return Path(str(importlib.resources.files("dofnet") / "data" / name))


def load_csv(path, schema: RealDataSchema) -> Dataset:
    """Read a CSV with a header row and encode it per ``schema``.

    Row numbers in errors count the header as row 1.
    """
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise ParseError("empty file") from None
        needed = [schema.response] + schema.names
        missing = [c for c in needed if c not in header]
        if missing:
            raise ParseError(f"missing column(s) {', '.join(missing)}")
        pos = {name: header.index(name) for name in needed}
        X_rows, y = [], []
        for rownum, cells in enumerate(reader, start=2):
            if not cells or all(not c.strip() for c in cells):
                continue
            if len(cells) != len(header):
                raise ParseError(f"expected {len(header)} cells, found {len(cells)}", rownum)
            label = cells[pos[schema.response]].strip()
            if label == schema.positive_level:
                y.append(1.0)
            elif schema.negative_level is None or label == schema.negative_level:
                y.append(0.0)
            else:
                raise ParseError(f"unknown response level {label!r}", rownum, schema.response)
            row = []
            for col in schema.covariates:
                row.extend(col.encode(cells[pos[col.column]], rownum))
            X_rows.append(row)

    names: list[str] = []
    groups: dict[str, tuple[int, ...]] = {}
    for col in schema.covariates:
        out = col.output_names()
        groups[col.column] = tuple(range(len(names), len(names) + len(out)))
        names.extend(out)
    X = np.array(X_rows, dtype=float).reshape(len(y), len(names))
    return Dataset(X, np.array(y), tuple(names), groups)


def load_lowbwt() -> Dataset:
    """The bundled low birth weight data with the bundled encoding."""
    schema = RealDataSchema.from_toml(bundled_path("lowbwt_schema.toml"))
    return load_csv(bundled_path("lowbwt.csv"), schema)


def _subset_label(subset) -> str:
    return "+".join(subset) if subset else "(intercept)"


def best_subset_select(
    data: Dataset,
    H: int,
    decay: float,
    K: int = 10,
    seed: int = 0,
    reps: int = 10,
    covariates=None,
    threads: int | None = None,
) -> tuple[tuple[str, ...], list[dict]]:
    """Exhaustive search over covariate subsets by mean ``-l_CV``.

    All subsets share the fold draws and network initialisations.  Ties go
    to the smaller subset, then to the lexicographically smaller name list.
    """
    names = list(covariates) if covariates is not None else list(data.groups or {})
    if not names and data.feature_names:
        names = list(data.feature_names)
    if len(names) > 20:
        raise ValueError("exhaustive search is limited to 20 candidate covariates")
    config = ModelConfig(hidden_units=H, decay=decay)
    cv_seed = child_seed(seed, "subset-cv")
    table = []
    for size in range(len(names) + 1):
        for subset in itertools.combinations(names, size):
            sub = data.select(subset)
            row = {"subset": _subset_label(subset), "size": size}
            try:
                lcv = cv_loglik(FFNNProcedure(sub.X, config), sub, K=K, N=reps, seed=cv_seed, threads=threads)
                row["neg_lcv"] = float(-lcv.mean())
                row["neg_lcv_se"] = float(lcv.std(ddof=1) / math.sqrt(lcv.size)) if lcv.size > 1 else 0.0
                row["status"] = "ok"
            except (EstimationError, ValueError) as exc:
                row.update(neg_lcv=math.nan, neg_lcv_se=math.nan, status=f"failed: {exc}")
            row["_subset"] = subset
            table.append(row)
    ok = [r for r in table if r["status"] == "ok"]
    if not ok:
        raise EstimationError("every subset failed")
    best = min(ok, key=lambda r: (r["neg_lcv"], r["size"], tuple(sorted(r["_subset"]))))
    for r in table:
        r["best"] = r is best
    best_subset = best["_subset"]
    for r in table:
        del r["_subset"]
    return tuple(best_subset), table


def real_data_compare(
    data: Dataset,
    H: int,
    decay: float,
    best,
    K: int = 10,
    N: int = 100,
    k: int | None = None,
    seed: int = 0,
    threads: int | None = None,
) -> list[dict]:
    """``-l_CV``, p_cv and horizontal GDF for the best, intercept-only and full models."""
    config = ModelConfig(hidden_units=H, decay=decay)
    full = list(data.groups or {})
    k = default_flips(data.n) if k is None else k
    rows = []
    for label, subset in (("B", list(best)), ("I", []), ("F", full)):
        sub = data.select(subset)
        proc = FFNNProcedure(sub.X, config)
        cv = p_cv(proc, sub, K=K, N=N, seed=child_seed(seed, "pcv"), threads=threads)
        gdf = gdf_horizontal(proc, sub, k=k, N=N, seed=child_seed(seed, "gdf"), threads=threads)
        rows.append(
            {
                "model": label,
                "covariates": _subset_label(subset),
                "neg_lcv": cv.detail["neg_lcv"],
                "neg_lcv_se": cv.detail["neg_lcv_se"],
                "neg_lcv_sd": cv.detail["neg_lcv_sd"],
                "pcv": cv.value,
                "pcv_se": cv.std_error,
                "pcv_sd": cv.detail["sd"],
                "gdf": gdf.value,
                "gdf_se": gdf.std_error,
            }
        )
    return rows


# --------------------------------------------------------------------------
# experiment specs


class Kind(str, enum.Enum):
    SCENARIO_GRID = "scenario_grid"
    ESTIMATOR_CURVES = "estimator_curves"
    TRUE_VS_INTERCEPT = "true_vs_intercept"
    REAL_DATA = "real_data"


@dataclass
class ExperimentSpec:
    kind: Kind
    name: str = ""
    master_seed: int = 0
    output_dir: str = "results"
    external_reps: int = 20
    internal_reps: int = 100
    scenarios: list = field(default_factory=lambda: [1])
    n: list = field(default_factory=lambda: [200])
    p: list = field(default_factory=lambda: [2])
    hidden: list = field(default_factory=lambda: [2])
    decay: list = field(default_factory=lambda: [0.01])
    m: int | None = None
    prevalence: float = 0.3
    k: int | None = None
    folds: int = 10
    k_range: list = field(default_factory=lambda: list(range(1, 21)))
    folds_range: list = field(default_factory=lambda: list(range(5, 21)))
    methods: list = field(default_factory=lambda: ["lrt", "gdf", "pcv"])
    vertical: bool = True
    iterations: int = 100
    arms: list = field(default_factory=lambda: ["true", "intercept"])
    weight_scale: float = 1.0
    intercept_prob: float = 0.5
    level: float = 0.95
    data: str | None = None
    schema: str | None = None
    subset_reps: int = 10
    covariates: list | None = None

    def __post_init__(self):
        self.kind = Kind(self.kind)
        if not self.name:
            self.name = self.kind.value
        for grid in ("scenarios", "n", "p", "hidden", "decay"):
            if not getattr(self, grid):
                raise ValueError(f"grid {grid!r} is empty")
        if self.external_reps < 1 or self.internal_reps < 1:
            raise ValueError("replication counts must be positive")
        if self.kind is Kind.SCENARIO_GRID and self.external_reps < 2:
            raise ValueError("scenario_grid needs external_reps >= 2 for standard errors")
        if self.folds < 2:
            raise ValueError("folds must be at least 2")
        unknown = set(self.methods) - {"lrt", "gdf", "pcv"}
        if unknown:
            raise ValueError(f"unknown methods {sorted(unknown)}")
        bad_arms = set(self.arms) - {"true", "intercept"}
        if len(self.arms) != 2 or bad_arms:
            raise ValueError("arms must name two of 'true', 'intercept'")

    @classmethod
    def from_dict(cls, raw: dict) -> "ExperimentSpec":
        known = {f.name for f in fields(cls)}
        unknown = set(raw) - known
        if unknown:
            raise ValueError(f"unknown spec key(s): {', '.join(sorted(unknown))}")
        return cls(**raw)

    @classmethod
    def from_file(cls, path) -> "ExperimentSpec":
        with open(path, "rb") as fh:
            return cls.from_dict(tomllib.load(fh))

    def to_dict(self) -> dict:
        out = asdict(self)
        out["kind"] = self.kind.value
        return out


def bundled_spec(name: str) -> Path:
    base = Path(str(importlib.resources.files("dofnet") / "specs"))
    for candidate in (name, f"{name}.spec"):
        if (base / candidate).is_file():
            return base / candidate
    raise FileNotFoundError(f"no bundled spec named {name!r}")


def list_bundled_specs() -> list[str]:
    base = Path(str(importlib.resources.files("dofnet") / "specs"))
    return sorted(p.name for p in base.glob("*.spec"))


# --------------------------------------------------------------------------
# cell bookkeeping


def _fmt(value):
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (float, np.floating)):
        return "nan" if math.isnan(value) else repr(float(value))
    return str(value)


def write_csv(rows: list[dict], path, columns: list[str] | None = None) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    if columns is None:
        columns = list(rows[0]) if rows else []
    tmp = path.with_suffix(path.suffix + ".tmp")
    with open(tmp, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(columns)
        for row in rows:
            writer.writerow([_fmt(row.get(c, "")) for c in columns])
    os.replace(tmp, path)
    return path


def _dump_json(obj, path):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_suffix(path.suffix + ".tmp")
    with open(tmp, "w", encoding="utf-8") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True, default=_json_default)
        fh.write("\n")
    os.replace(tmp, path)


def _json_default(obj):
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, enum.Enum):
        return obj.value
    if isinstance(obj, Path):
        return str(obj)
    raise TypeError(f"cannot serialise {type(obj).__name__}")


class CellStore:
    """Per-cell result cache that lets an interrupted experiment resume."""

    def __init__(self, output_dir, spec: ExperimentSpec):
        self.root = Path(output_dir) / "cells"
        self.spec = spec

    def _path(self, key: dict) -> Path:
        blob = json.dumps({"spec": self.spec.to_dict(), "cell": key}, sort_keys=True, default=_json_default)
        digest = hashlib.sha256(blob.encode()).hexdigest()[:16]
        return self.root / f"{self.spec.kind.value}-{digest}.json"

    def get_or_compute(self, key: dict, compute):
        path = self._path(key)
        if path.is_file():
            with open(path, encoding="utf-8") as fh:
                return json.load(fh)
        result = compute()
        # round-trip so fresh and cached results are formatted identically
        result = json.loads(json.dumps(result, default=_json_default))
        _dump_json(result, path)
        return result


def _cell_guard(compute, key):
    def run():
        try:
            return compute()
        except (EstimationError, ValueError) as exc:
            logger.error("cell %s failed: %s", key, exc)
            return {"status": f"failed: {exc}"}

    return run


def _agg(values) -> tuple[float, float]:
    v = np.asarray([x for x in values if x is not None], dtype=float)
    if v.size == 0:
        return math.nan, math.nan
    if v.size == 1:
        return float(v[0]), math.nan
    return float(v.mean()), float(v.std(ddof=1) / math.sqrt(v.size))


# --------------------------------------------------------------------------
# studies

GRID_COLUMNS = [
    "scenario", "n", "p", "m", "H", "decay", "external_reps",
    "lrt_mean", "lrt_se",
    "gdf_mean", "gdf_se", "gdf_within_se",
    "pcv_mean", "pcv_se", "pcv_within_sd",
    "status",
]


def _scenario_seed(master, sc: ScenarioSpec) -> int:
    # shared by every (H, decay) cell of a scenario so those cells see the same data
    return child_seed(master, "scenario", sc.scenario.number, sc.n, sc.p, sc.m or 0)


def run_scenario_grid(spec: ExperimentSpec, threads: int | None = None, store: CellStore | None = None) -> list[dict]:
    """Mean LRT, horizontal GDF and p_cv over ``external_reps`` null datasets per cell."""
    rows = []
    for scen, n, p, H, decay in itertools.product(spec.scenarios, spec.n, spec.p, spec.hidden, spec.decay):
        sc = ScenarioSpec(Scenario.parse(scen), n, p, spec.m if spec.m is not None else None, spec.prevalence)
        key = {"scenario": sc.scenario.number, "n": n, "p": p, "m": sc.m, "H": H, "decay": decay}

        def compute(sc=sc, H=H, decay=decay):
            return _grid_cell(spec, sc, H, decay, threads)

        compute = _cell_guard(compute, key)
        res = store.get_or_compute(key, compute) if store else compute()
        rows.append({**key, "m": sc.m if sc.m is not None else "", "external_reps": spec.external_reps, **res})
    return rows


def _grid_cell(spec, sc, H, decay, threads):
    config = ModelConfig(hidden_units=H, decay=decay)
    base = _scenario_seed(spec.master_seed, sc)
    R = spec.external_reps
    out = {"status": "ok"}

    def make_proc(d):
        return FFNNProcedure(d.X, config)

    if "lrt" in spec.methods:
        nd = null_dof(make_proc, lambda rng: gen_scenario(sc, rng), reps=R, seed=base, threads=threads)
        out["lrt_mean"], out["lrt_se"] = nd.value, nd.std_error
    datasets = [gen_scenario(sc, child_rng(base, r, "data")) for r in range(R)]
    k = spec.k if spec.k is not None else default_flips(sc.n)
    if "gdf" in spec.methods:
        ests = [
            gdf_horizontal(make_proc(d), d, k=k, N=spec.internal_reps, seed=child_seed(base, r, "gdf"), threads=threads)
            for r, d in enumerate(datasets)
        ]
        out["gdf_mean"], out["gdf_se"] = _agg([e.value for e in ests])
        out["gdf_within_se"] = float(np.mean([e.std_error for e in ests]))
    if "pcv" in spec.methods:
        ests = []
        for r, d in enumerate(datasets):
            if d.n1 == 0 or d.n0 == 0:
                logger.warning("dataset %d has a single class; skipped for p_cv", r)
                continue
            ests.append(
                p_cv(make_proc(d), d, K=spec.folds, N=spec.internal_reps, seed=child_seed(base, r, "pcv"), threads=threads)
            )
        out["pcv_mean"], out["pcv_se"] = _agg([e.value for e in ests])
        out["pcv_within_sd"] = float(np.mean([e.detail["sd"] for e in ests])) if ests else math.nan
    return out


CURVE_COLUMNS = ["scenario", "n", "p", "m", "H", "decay", "estimator", "parameter", "value", "mean", "se", "reps", "status"]


def run_estimator_curves(spec: ExperimentSpec, threads: int | None = None, store: CellStore | None = None) -> list[dict]:
    """Horizontal GDF over ``k_range``, vertical GDF, and p_cv over ``folds_range``."""
    rows = []
    for scen, n, p, H, decay in itertools.product(spec.scenarios, spec.n, spec.p, spec.hidden, spec.decay):
        sc = ScenarioSpec(Scenario.parse(scen), n, p, spec.m, spec.prevalence)
        config = ModelConfig(hidden_units=H, decay=decay)
        base = _scenario_seed(spec.master_seed, sc)
        cell = {"scenario": sc.scenario.number, "n": n, "p": p, "m": sc.m if sc.m is not None else "", "H": H, "decay": decay}
        points = [("gdf_horizontal", "k", k) for k in spec.k_range]
        if spec.vertical:
            points.append(("gdf_vertical", "k", 1))
        points += [("p_cv", "K", K) for K in spec.folds_range]
        for estimator, pname, pval in points:
            key = {**cell, "estimator": estimator, "parameter": pname, "value": pval}

            def compute(sc=sc, config=config, base=base, estimator=estimator, pval=pval):
                vals = []
                for r in range(spec.external_reps):
                    d = gen_scenario(sc, child_rng(base, r, "data"))
                    proc = FFNNProcedure(d.X, config)
                    if estimator == "gdf_horizontal":
                        e = gdf_horizontal(proc, d, k=pval, N=spec.internal_reps, seed=child_seed(base, r, "gdf"), threads=threads)
                    elif estimator == "gdf_vertical":
                        e = gdf_vertical(proc, d, N=spec.internal_reps, seed=child_seed(base, r, "vgdf"), threads=threads)
                    else:
                        if d.n1 == 0 or d.n0 == 0:
                            continue
                        e = p_cv(proc, d, K=pval, N=spec.internal_reps, seed=child_seed(base, r, "pcv"), threads=threads)
                    vals.append(e.value)
                mean, se = _agg(vals)
                return {"mean": mean, "se": se, "reps": len(vals), "status": "ok"}

            compute = _cell_guard(compute, key)
            res = store.get_or_compute(key, compute) if store else compute()
            rows.append({**key, **res})
    return rows


TVI_COLUMNS = [
    "n", "p", "H", "decay", "arms", "iterations",
    "gdf_true_mean", "gdf_true_se", "gdf_int_mean", "gdf_int_se",
    "pcv_true_mean", "pcv_true_se", "pcv_int_mean", "pcv_int_se",
    "delta_gdf_center", "delta_gdf_half_width", "delta_pcv_center", "delta_pcv_half_width",
    "status",
]


def _arm_generator(arm: str, spec: ExperimentSpec, n: int, p: int, H: int):
    if arm == "true":
        tm = TrueModelSpec(n, p, H, spec.weight_scale)
        return lambda rng: gen_true_model(tm, rng)[0]
    return lambda rng: gen_intercept_only(n, p, spec.intercept_prob, rng)


def run_true_vs_intercept(spec: ExperimentSpec, threads: int | None = None, store: CellStore | None = None) -> list[dict]:
    """Paired-t intervals for the GDF and p_cv gaps between two data generators."""
    rows = []
    for n, p, H, decay in itertools.product(spec.n, spec.p, spec.hidden, spec.decay):
        key = {"n": n, "p": p, "H": H, "decay": decay, "arms": "/".join(spec.arms)}

        def compute(n=n, p=p, H=H, decay=decay):
            config = ModelConfig(hidden_units=H, decay=decay)
            gens = [_arm_generator(a, spec, n, p, H) for a in spec.arms]
            dg, dp = paired_delta_run(
                gens[0],
                gens[1],
                config,
                spec.iterations,
                child_seed(spec.master_seed, "paired", n, p, H),
                k=spec.k,
                K=spec.folds,
                N=spec.internal_reps,
                threads=threads,
            )
            out = {"iterations": int(dg.diffs.size), "status": "ok"}
            out["gdf_true_mean"], out["gdf_true_se"] = _agg(dg.true)
            out["gdf_int_mean"], out["gdf_int_se"] = _agg(dg.intercept)
            out["pcv_true_mean"], out["pcv_true_se"] = _agg(dp.true)
            out["pcv_int_mean"], out["pcv_int_se"] = _agg(dp.intercept)
            out["delta_gdf_center"], out["delta_gdf_half_width"] = paired_t_ci(dg, spec.level)
            out["delta_pcv_center"], out["delta_pcv_half_width"] = paired_t_ci(dp, spec.level)
            return out

        compute = _cell_guard(compute, key)
        res = store.get_or_compute(key, compute) if store else compute()
        rows.append({**key, **res})
    return rows


SUBSET_COLUMNS = ["H", "decay", "subset", "size", "neg_lcv", "neg_lcv_se", "best", "status"]
COMPARE_COLUMNS = [
    "H", "decay", "model", "covariates",
    "neg_lcv", "neg_lcv_se", "neg_lcv_sd", "pcv", "pcv_se", "pcv_sd", "gdf", "gdf_se", "status",
]


def _load_real(spec: ExperimentSpec) -> Dataset:
    schema = RealDataSchema.from_toml(spec.schema or bundled_path("lowbwt_schema.toml"))
    return load_csv(spec.data or bundled_path("lowbwt.csv"), schema)


def run_real_data(spec: ExperimentSpec, threads: int | None = None, store: CellStore | None = None) -> tuple[list[dict], list[dict]]:
    """Best-subset search and best/intercept/full comparison for each (H, decay)."""
    data = _load_real(spec)
    subset_rows, compare_rows = [], []
    for H, decay in itertools.product(spec.hidden, spec.decay):
        key = {"H": H, "decay": decay}

        def compute(H=H, decay=decay):
            seed = child_seed(spec.master_seed, "real", H, decay)
            best, table = best_subset_select(
                data, H, decay, K=spec.folds, seed=seed, reps=spec.subset_reps,
                covariates=spec.covariates, threads=threads,
            )
            compare = real_data_compare(
                data, H, decay, best, K=spec.folds, N=spec.internal_reps, k=spec.k, seed=seed, threads=threads
            )
            return {"subsets": table, "compare": compare}

        def guarded(compute=compute):
            try:
                return compute()
            except (EstimationError, ValueError) as exc:
                logger.error("cell %s failed: %s", key, exc)
                return {"subsets": [], "compare": [{"status": f"failed: {exc}"}]}

        res = store.get_or_compute(key, guarded) if store else guarded()
        subset_rows += [{**key, **r} for r in res["subsets"]]
        compare_rows += [{**key, "status": "ok", **r} for r in res["compare"]]
    return subset_rows, compare_rows


# --------------------------------------------------------------------------
# driver


def _versions() -> dict:
    import numba
    import scipy

    return {
        "dofnet": __version__,
        "numpy": np.__version__,
        "scipy": scipy.__version__,
        "numba": numba.__version__,
        "python": platform.python_version(),
    }


def write_manifest(output_dir, payload: dict) -> Path:
    """JSON manifest with everything needed to rerun; wall time goes to ``timing.txt``."""
    path = Path(output_dir) / "manifest.json"
    _dump_json({**payload, "versions": _versions()}, path)
    return path


def run_experiment(spec: ExperimentSpec, threads: int | None = None, output_dir=None) -> list[Path]:
    """Run ``spec`` and write its CSV file(s), ``manifest.json`` and ``timing.txt``."""
    out = Path(output_dir or spec.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    store = CellStore(out, spec)
    start = time.perf_counter()
    files = []
    if spec.kind is Kind.SCENARIO_GRID:
        files.append(write_csv(run_scenario_grid(spec, threads, store), out / f"{spec.name}.csv", GRID_COLUMNS))
    elif spec.kind is Kind.ESTIMATOR_CURVES:
        files.append(write_csv(run_estimator_curves(spec, threads, store), out / f"{spec.name}.csv", CURVE_COLUMNS))
    elif spec.kind is Kind.TRUE_VS_INTERCEPT:
        files.append(write_csv(run_true_vs_intercept(spec, threads, store), out / f"{spec.name}.csv", TVI_COLUMNS))
    else:
        subsets, compare = run_real_data(spec, threads, store)
        files.append(write_csv(subsets, out / f"{spec.name}_subsets.csv", SUBSET_COLUMNS))
        files.append(write_csv(compare, out / f"{spec.name}_compare.csv", COMPARE_COLUMNS))
    elapsed = time.perf_counter() - start
    files.append(
        write_manifest(
            out,
            {
                "command": "experiment",
                "spec": spec.to_dict(),
                "master_seed": spec.master_seed,
                "outputs": [f.name for f in files],
            },
        )
    )
    (out / "timing.txt").write_text(f"wall_time_seconds {elapsed:.3f}\n", encoding="utf-8")
    return files
