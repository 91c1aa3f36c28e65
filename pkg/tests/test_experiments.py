import json
import math

import numpy as np
import pytest

from dofnet.experiments import (
    GRID_COLUMNS,
    ColumnSpec,
    ExperimentSpec,
    Kind,
    ParseError,
    RealDataSchema,
    best_subset_select,
    bundled_path,
    bundled_spec,
    list_bundled_specs,
    load_csv,
    load_lowbwt,
    real_data_compare,
    run_estimator_curves,
    run_experiment,
    run_scenario_grid,
    run_true_vs_intercept,
    write_csv,
)
from dofnet.ffnn import Dataset

SCHEMA = """
[response]
column = "out"
positive_level = "yes"
negative_level = "no"

[[covariates]]
column = "x"
kind = "numeric"

[[covariates]]
column = "colour"
kind = "factor"
levels = ["red", "green", "blue"]
reference_level = "red"

[[covariates]]
column = "flag"
kind = "binary"
levels = ["N", "Y"]
reference_level = "N"

[[covariates]]
column = "count"
kind = "ordered"
levels = ["none", "one", "many"]
"""

TOY = """id,out,x,colour,flag,count
1,yes,1.5,red,N,none
2,no,-2,green,Y,many
3,no,0.25,blue,N,one
"""


@pytest.fixture
def schema(tmp_path):
    path = tmp_path / "schema.toml"
    path.write_text(SCHEMA)
    return RealDataSchema.from_toml(path)


def _write(tmp_path, text, name="toy.csv"):
    path = tmp_path / name
    path.write_text(text)
    return path


class TestLoadCsv:
    def test_toy_matrix(self, tmp_path, schema):
        d = load_csv(_write(tmp_path, TOY), schema)
        expected = np.array(
            [
                [1.5, 0, 0, 0, 0],
                [-2.0, 1, 0, 1, 2],
                [0.25, 0, 1, 0, 1],
            ]
        )
        np.testing.assert_array_equal(d.X, expected)
        np.testing.assert_array_equal(d.y, [1, 0, 0])
        assert d.feature_names == ("x", "colour_green", "colour_blue", "flag", "count")
        assert d.groups["colour"] == (1, 2)

    @pytest.mark.parametrize(
        "bad,row,column",
        [
            ("2,no,abc,green,Y,many", 3, "x"),
            ("2,no,1,purple,Y,many", 3, "colour"),
            ("2,maybe,1,green,Y,many", 3, "out"),
            ("2,no,1,green,Q,many", 3, "flag"),
        ],
    )
    def test_error_location(self, tmp_path, schema, bad, row, column):
        text = TOY.splitlines()
        text[2] = bad
        with pytest.raises(ParseError) as info:
            load_csv(_write(tmp_path, "\n".join(text) + "\n"), schema)
        assert info.value.row == row
        assert info.value.column == column

    def test_missing_column(self, tmp_path, schema):
        with pytest.raises(ParseError, match="colour"):
            load_csv(_write(tmp_path, "id,out,x,flag,count\n1,yes,1,N,none\n"), schema)

    def test_ragged_row(self, tmp_path, schema):
        with pytest.raises(ParseError) as info:
            load_csv(_write(tmp_path, TOY + "4,yes,1\n"), schema)
        assert info.value.row == 5

    def test_column_spec_validation(self):
        with pytest.raises(ValueError):
            ColumnSpec("a", "binary", ("x",))
        with pytest.raises(ValueError):
            ColumnSpec("a", "factor", ("x", "y"), reference_level="z")


class TestLowbwt:
    def test_shape(self):
        d = load_lowbwt()
        assert d.n == 189
        assert (d.n1, d.n0) == (59, 130)
        assert len(d.groups["race"]) == 2
        assert d.p == 9

    def test_intercept_only_loglik(self):
        d = load_lowbwt()
        q = d.n1 / d.n
        nll = -(d.n1 * math.log(q) + d.n0 * math.log(1 - q))
        assert nll == pytest.approx(117.34, abs=0.01)

    def test_ordered_capped(self):
        d = load_lowbwt()
        assert set(np.unique(d.select(["ptl"]).X)) <= {0.0, 1.0, 2.0}


class TestSpec:
    def test_bundled(self):
        names = list_bundled_specs()
        for expected in ("table2_scenario1.spec", "true_vs_intercept.spec", "lowbwt.spec", "smoke.spec"):
            assert expected in names
        for name in names:
            spec = ExperimentSpec.from_file(bundled_spec(name))
            assert spec.external_reps >= 1

    def test_table2_grid_arithmetic(self):
        spec = ExperimentSpec.from_file(bundled_spec("table2_scenario1"))
        assert len(spec.p) * len(spec.hidden) == 9
        assert spec.decay == [0.01, 0.05, 0.1]

    def test_unknown_key(self):
        with pytest.raises(ValueError, match="bogus"):
            ExperimentSpec.from_dict({"kind": "scenario_grid", "bogus": 1})

    def test_empty_grid(self):
        with pytest.raises(ValueError):
            ExperimentSpec(kind=Kind.SCENARIO_GRID, hidden=[])

    def test_round_trip(self):
        spec = ExperimentSpec(kind="real_data", hidden=[2, 5])
        assert ExperimentSpec.from_dict(spec.to_dict()) == spec


def _tiny_grid(**kw):
    base = dict(kind="scenario_grid", master_seed=3, external_reps=2, internal_reps=3, n=[40], p=[2],
                hidden=[2], decay=[0.05], folds=4)
    base.update(kw)
    return ExperimentSpec(**base)


class TestScenarioGrid:
    def test_single_cell(self):
        rows = run_scenario_grid(_tiny_grid())
        assert len(rows) == 1
        row = rows[0]
        assert row["status"] == "ok"
        for col in ("lrt_se", "gdf_se", "pcv_se"):
            assert math.isfinite(row[col]) and row[col] >= 0
        assert set(row) <= set(GRID_COLUMNS)

    def test_mixed_default_m(self):
        rows = run_scenario_grid(_tiny_grid(scenarios=[3], p=[4], methods=["lrt"]))
        assert rows[0]["m"] == 2

    def test_penalty_reduces_gdf(self):
        rows = run_scenario_grid(_tiny_grid(n=[60], p=[3], hidden=[4], decay=[0.01, 0.1],
                                            external_reps=3, internal_reps=4, methods=["gdf"]))
        lo, hi = rows
        assert hi["gdf_mean"] <= lo["gdf_mean"] + 2 * math.hypot(lo["gdf_se"], hi["gdf_se"])


class TestCurves:
    def test_point_counts(self):
        spec = ExperimentSpec(kind="estimator_curves", master_seed=1, external_reps=1, internal_reps=2,
                              n=[40], p=[2], hidden=[2], decay=[0.1], k_range=list(range(1, 21)),
                              folds_range=[5, 6], vertical=True)
        rows = run_estimator_curves(spec)
        assert sum(r["estimator"] == "gdf_horizontal" for r in rows) == 20
        assert sum(r["estimator"] == "gdf_vertical" for r in rows) == 1
        assert sum(r["estimator"] == "p_cv" for r in rows) == 2


class TestTrueVsIntercept:
    def test_identical_arms(self):
        spec = ExperimentSpec(kind="true_vs_intercept", master_seed=2, internal_reps=2, iterations=3,
                              n=[30], p=[2], hidden=[2], decay=[0.05], folds=5, k=3,
                              arms=["intercept", "intercept"])
        (row,) = run_true_vs_intercept(spec)
        assert row["delta_gdf_center"] == 0.0 and row["delta_gdf_half_width"] == 0.0
        assert row["delta_pcv_center"] == 0.0 and row["delta_pcv_half_width"] == 0.0


class TestSubsetSelection:
    def test_enumerates_all(self):
        d = load_lowbwt()
        best, table = best_subset_select(d, 2, 0.1, K=5, seed=1, reps=1, covariates=["lwt", "ptl", "ht"])
        assert len(table) == 2**3
        assert sum(r["best"] for r in table) == 1
        assert all(r["status"] == "ok" and math.isfinite(r["neg_lcv"]) for r in table)
        winner = next(r for r in table if r["best"])
        assert winner["neg_lcv"] == min(r["neg_lcv"] for r in table)
        assert set(best) <= {"lwt", "ptl", "ht"}

    def test_noise_covariate_loses(self):
        wins = 0
        for seed in range(5):
            r = np.random.default_rng(seed)
            d = Dataset(r.normal(size=(120, 1)), (r.random(120) < 0.4).astype(float), ("noise",))
            best, _ = best_subset_select(d, 2, 0.05, K=10, seed=seed, reps=3)
            wins += best == ()
        assert wins >= 3

    def test_too_many_candidates(self):
        d = Dataset(np.zeros((4, 21)), [0, 1, 0, 1], tuple(f"c{i}" for i in range(21)))
        with pytest.raises(ValueError):
            best_subset_select(d, 2, 0.1)

    def test_compare_rows(self):
        d = load_lowbwt()
        rows = real_data_compare(d.select(["lwt", "ptl"]), 2, 0.1, ["ptl"], K=5, N=2, seed=3)
        assert [r["model"] for r in rows] == ["B", "I", "F"]
        assert rows[0]["covariates"] == "ptl" and rows[1]["covariates"] == "(intercept)"


class TestOutputs:
    def test_write_csv_format(self, tmp_path):
        path = write_csv([{"a": 0.1, "b": math.nan, "c": True, "d": 3}], tmp_path / "x.csv")
        assert path.read_text() == "a,b,c,d\n0.1,nan,true,3\n"

    def test_run_experiment_files(self, tmp_path):
        files = run_experiment(_tiny_grid(name="tiny"), output_dir=tmp_path)
        assert [f.name for f in files] == ["tiny.csv", "manifest.json"]
        manifest = json.loads((tmp_path / "manifest.json").read_text())
        assert manifest["master_seed"] == 3 and manifest["spec"]["kind"] == "scenario_grid"
        assert "versions" in manifest
        assert (tmp_path / "timing.txt").is_file()

    def test_resume_uses_cache(self, tmp_path):
        spec = _tiny_grid(name="tiny")
        run_experiment(spec, output_dir=tmp_path)
        first = (tmp_path / "tiny.csv").read_bytes()
        cached = list((tmp_path / "cells").glob("*.json"))
        assert len(cached) == 1
        # a tampered cache entry is picked up, proving the cell is not recomputed
        payload = json.loads(cached[0].read_text())
        payload["lrt_mean"] = 123.0
        cached[0].write_text(json.dumps(payload))
        run_experiment(spec, output_dir=tmp_path)
        assert "123.0" in (tmp_path / "tiny.csv").read_text()
        cached[0].unlink()
        run_experiment(spec, output_dir=tmp_path)
        assert (tmp_path / "tiny.csv").read_bytes() == first

    def test_real_data_files(self, tmp_path):
        spec = ExperimentSpec(kind="real_data", name="rd", master_seed=4, internal_reps=2, subset_reps=1,
                              hidden=[2], decay=[0.1], folds=5, covariates=["lwt", "ht"])
        files = run_experiment(spec, output_dir=tmp_path)
        assert [f.name for f in files] == ["rd_subsets.csv", "rd_compare.csv", "manifest.json"]
        assert len((tmp_path / "rd_subsets.csv").read_text().splitlines()) == 1 + 4
        assert len((tmp_path / "rd_compare.csv").read_text().splitlines()) == 1 + 3

    def test_bundled_data_paths(self):
        assert bundled_path("lowbwt.csv").is_file()
        assert bundled_path("lowbwt_schema.toml").is_file()
