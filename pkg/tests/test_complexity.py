import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dofnet.complexity import (
    ComplexityEstimate,
    ConstantMeanProcedure,
    EstimationError,
    FFNNProcedure,
    IdentityProcedure,
    Method,
    ModelingProcedure,
    ProcedureFit,
    cv_loglik,
    default_flips,
    flip_sweep,
    gdf_horizontal,
    gdf_vertical,
    lrt_statistic,
    null_dof,
    p_cv,
    stratified_folds,
)
from dofnet.datagen import ScenarioSpec, gen_scenario
from dofnet.ffnn import Dataset, FitError, ModelConfig


def _two_class_y(n, seed):
    y = (np.random.default_rng(seed).random(n) < 0.5).astype(float)
    y[0], y[1] = 0.0, 1.0
    return y


def _data(y):
    return Dataset(np.zeros((len(y), 0)), y)


def _constant_mean_horizontal_expectation(y):
    # derived from the within-sweep partition constraint
    n = y.size
    s = np.sum(1 - 2 * y)
    return n / (n - 1) - s * s / (n * (n - 1))


class _Flaky(ModelingProcedure):
    """Constant mean that fails on every ``period``-th seed."""

    def __init__(self, n, period):
        self.inner = ConstantMeanProcedure(n)
        self.period = period

    def fit(self, y, seed, rows=None):
        if seed % self.period == 0:
            raise FitError("induced failure")
        return self.inner.fit(y, seed, rows)


class TestProcedures:
    def test_constant_mean(self):
        fit = ConstantMeanProcedure(4).fit(np.array([1.0, 0, 0, 1]), 0)
        np.testing.assert_array_equal(fit.fitted, 0.5)
        assert fit.loglik == pytest.approx(4 * math.log(0.5))

    def test_constant_mean_single_class(self):
        fit = ConstantMeanProcedure(3).fit(np.zeros(3), 0)
        assert np.all(fit.fitted == 0.0)
        assert math.isfinite(fit.loglik)
        assert fit.predict(np.array([0]))[0] == 1e-12

    def test_constant_mean_rows(self):
        fit = ConstantMeanProcedure(4).fit(np.array([1.0, 1, 0, 0]), 0, rows=np.array([0, 1, 2]))
        assert fit.fitted.size == 3
        np.testing.assert_allclose(fit.predict(np.array([3])), 2 / 3)

    def test_identity(self):
        y = np.array([1.0, 0.0, 1.0])
        fit = IdentityProcedure(3).fit(y, 0)
        np.testing.assert_array_equal(fit.fitted, y)
        assert math.isfinite(fit.loglik)

    def test_ffnn_deterministic(self):
        d = gen_scenario(ScenarioSpec("continuous_inputs", 40, 2), np.random.default_rng(1))
        proc = FFNNProcedure(d.X, ModelConfig(2, decay=0.01))
        a, b = proc.fit(d.y, 5), proc.fit(d.y, 5)
        np.testing.assert_array_equal(a.fitted, b.fitted)
        assert a.fitted.size == d.n
        assert np.all((a.fitted >= 1e-12) & (a.fitted <= 1 - 1e-12))
        assert isinstance(a, ProcedureFit)


class TestComplexityEstimate:
    def test_invariants(self):
        with pytest.raises(ValueError):
            ComplexityEstimate(1.0, -0.1, Method.P_CV, 3)
        with pytest.raises(ValueError):
            ComplexityEstimate(1.0, 0.1, Method.P_CV, 0)

    def test_as_dict(self):
        d = ComplexityEstimate(2.0, 0.5, Method.GDF_HORIZONTAL, 4, {"k": 3}).as_dict()
        assert d["method"] == "gdf_horizontal"
        assert d["value"] == 2.0 and d["k"] == 3


class TestVerticalGDF:
    def test_identity_n15(self):
        y = _two_class_y(15, 0)
        est = gdf_vertical(IdentityProcedure(15), _data(y), N=1)
        assert est.value == 15.0
        assert est.std_error == 0.0

    def test_constant_mean_n20(self):
        y = _two_class_y(20, 1)
        est = gdf_vertical(ConstantMeanProcedure(20), _data(y), N=3, seed=4)
        assert est.value == pytest.approx(1.0, abs=1e-14)

    @given(st.integers(2, 50), st.integers(0, 2**32 - 1))
    @settings(max_examples=49, deadline=None)
    def test_oracle_exactness(self, n, seed):
        y = _two_class_y(n, seed)
        assert gdf_vertical(IdentityProcedure(n), _data(y), N=2, seed=seed).value == n
        cm = gdf_vertical(ConstantMeanProcedure(n), _data(y), N=2, seed=seed).value
        assert cm == pytest.approx(1.0, abs=1e-14)

    def test_deterministic(self):
        d = gen_scenario(ScenarioSpec("binary_inputs", 20, 2), np.random.default_rng(3))
        proc = FFNNProcedure(d.X, ModelConfig(2, decay=0.05))
        a = gdf_vertical(proc, d, N=2, seed=8)
        b = gdf_vertical(proc, d, N=2, seed=8, threads=3)
        assert (a.value, a.std_error) == (b.value, b.std_error)

    def test_too_many_discards(self):
        y = _two_class_y(10, 2)
        with pytest.raises(EstimationError):
            gdf_vertical(_Flaky(10, 1), _data(y), N=3)

    def test_bad_n(self):
        with pytest.raises(ValueError):
            gdf_vertical(IdentityProcedure(3), _data(np.array([0.0, 1, 0])), N=0)


class TestFlipSweep:
    def test_sizes(self, rng):
        sw = flip_sweep(np.array([0.0, 1, 1, 0, 1]), 2, rng)
        assert [len(s) for s in sw.flip_sets] == [2, 2, 1]
        assert len(sw.vectors()) == 3

    def test_full_flip(self, rng):
        y = np.array([0.0, 1, 1, 0])
        sw = flip_sweep(y, 4, rng)
        assert len(sw) == 1
        np.testing.assert_array_equal(sw.perturbed(0), 1 - y)

    @given(st.data())
    @settings(max_examples=100, deadline=None)
    def test_partition(self, data):
        n = data.draw(st.integers(1, 200))
        k = data.draw(st.integers(1, n))
        seed = data.draw(st.integers(0, 2**32 - 1))
        r = np.random.default_rng(seed)
        y = r.integers(0, 2, n).astype(float)
        sw = flip_sweep(y, k, r)
        assert len(sw) == -(-n // k)
        allidx = np.concatenate(sw.flip_sets)
        np.testing.assert_array_equal(np.sort(allidx), np.arange(n))
        for t, vec in enumerate(sw.vectors()):
            changed = np.flatnonzero(vec != y)
            np.testing.assert_array_equal(changed, np.sort(sw.flip_sets[t]))
            if t < len(sw) - 1:
                assert changed.size == k

    @pytest.mark.parametrize("k", [0, 6])
    def test_k_range(self, rng, k):
        with pytest.raises(ValueError):
            flip_sweep(np.zeros(5), k, rng)


class TestHorizontalGDF:
    def test_constant_mean_balanced(self):
        y = np.r_[np.ones(25), np.zeros(25)]
        est = gdf_horizontal(ConstantMeanProcedure(50), _data(y), k=5, N=100, seed=3)
        assert abs(est.value - 1.0) <= 0.15
        assert est.detail["k"] == 5 and est.detail["columns"] == 1000

    def test_constant_mean_agrees_within_jackknife(self):
        y = np.r_[np.ones(25), np.zeros(25)]
        est = gdf_horizontal(ConstantMeanProcedure(50), _data(y), k=5, N=200, seed=11)
        assert abs(est.value - 1.0) < 3 * est.std_error

    def test_constant_mean_unbalanced_expectation(self):
        y = np.r_[np.ones(15), np.zeros(35)]
        est = gdf_horizontal(ConstantMeanProcedure(50), _data(y), k=5, N=200, seed=5)
        expected = _constant_mean_horizontal_expectation(y)
        assert expected == pytest.approx(0.857142857, abs=1e-8)
        assert abs(est.value - expected) < 3 * est.std_error

    def test_identity_is_n(self):
        y = _two_class_y(12, 4)
        est = gdf_horizontal(IdentityProcedure(12), _data(y), k=3, N=4)
        assert est.value == pytest.approx(12.0, abs=1e-10)
        assert est.std_error == pytest.approx(0.0, abs=1e-9)

    def test_default_k(self):
        assert default_flips(200) == 20
        assert default_flips(189) == 19
        assert default_flips(4) == 1
        y = _two_class_y(30, 0)
        assert gdf_horizontal(ConstantMeanProcedure(30), _data(y), N=2).detail["k"] == 3

    def test_needs_two_sweeps(self):
        with pytest.raises(ValueError):
            gdf_horizontal(ConstantMeanProcedure(4), _data(np.array([0.0, 1, 0, 1])), N=1)

    def test_thread_independent(self):
        d = gen_scenario(ScenarioSpec("continuous_inputs", 30, 2), np.random.default_rng(6))
        proc = FFNNProcedure(d.X, ModelConfig(2, decay=0.05))
        a = gdf_horizontal(proc, d, k=3, N=3, seed=2, threads=1)
        b = gdf_horizontal(proc, d, k=3, N=3, seed=2, threads=4)
        assert a == b

    def test_discards_tolerated(self):
        y = np.r_[np.ones(10), np.zeros(10)]
        est = gdf_horizontal(_Flaky(20, 13), _data(y), k=2, N=20, seed=1)
        assert est.detail["discarded"] > 0


class TestStratifiedFolds:
    def test_exact_divisibility(self, rng):
        y = np.r_[np.ones(5), np.zeros(5)]
        folds = stratified_folds(y, 5, rng)
        for f in range(5):
            assert y[folds == f].tolist() in ([0.0, 1.0], [1.0, 0.0])

    def test_n189(self, rng):
        y = np.r_[np.ones(59), np.zeros(130)]
        sizes = np.bincount(stratified_folds(y, 10, rng), minlength=10)
        assert set(sizes) <= {18, 19}

    @given(st.integers(4, 120), st.integers(2, 12), st.integers(0, 2**32 - 1))
    @settings(max_examples=100, deadline=None)
    def test_class_balance(self, n, K, seed):
        r = np.random.default_rng(seed)
        y = r.integers(0, 2, n).astype(float)
        y[:2] = [0, 1]
        K = min(K, n)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            folds = stratified_folds(y, K, r)
        assert folds.shape == (n,) and set(folds) <= set(range(K))
        for cls in (0, 1):
            counts = np.bincount(folds[y == cls], minlength=K)
            assert counts.max() - counts.min() <= 1
        total = np.bincount(folds, minlength=K)
        assert total.max() - total.min() <= 1

    def test_warns_when_class_small(self, rng):
        y = np.r_[np.ones(2), np.zeros(20)]
        with pytest.warns(UserWarning):
            stratified_folds(y, 5, rng)

    def test_errors(self, rng):
        with pytest.raises(ValueError):
            stratified_folds(np.zeros(10), 2, rng)
        with pytest.raises(ValueError):
            stratified_folds(np.array([0.0, 1.0, 0.0]), 1, rng)


class TestPCV:
    def test_constant_mean_near_zero(self):
        y = np.r_[np.ones(250), np.zeros(250)]
        est = p_cv(ConstantMeanProcedure(500), _data(y), K=10, N=10, seed=1)
        assert abs(est.value) < 0.5
        assert est.value > -1e-9

    def test_constant_mean_plugin_value(self):
        # balanced folds: each held-out fold has the same mean as the training part
        y = np.r_[np.ones(50), np.zeros(50)]
        est = p_cv(ConstantMeanProcedure(100), _data(y), K=10, N=2)
        assert est.value == pytest.approx(0.0, abs=1e-9)

    def test_detail_and_neg_lcv(self):
        y = np.r_[np.ones(30), np.zeros(70)]
        est = p_cv(ConstantMeanProcedure(100), _data(y), K=5, N=4, seed=2)
        lcv = cv_loglik(ConstantMeanProcedure(100), _data(y), K=5, N=4, seed=2)
        assert est.detail["neg_lcv"] == pytest.approx(-lcv.mean())
        assert est.detail["K"] == 5
        assert est.value == pytest.approx(est.detail["loglik_full"] + est.detail["neg_lcv"])

    def test_requires_both_classes(self):
        with pytest.raises(ValueError):
            p_cv(ConstantMeanProcedure(10), _data(np.ones(10)), K=2, N=2)

    def test_bad_k(self):
        with pytest.raises(ValueError):
            p_cv(ConstantMeanProcedure(4), _data(np.array([0.0, 1, 0, 1])), K=1)

    def test_ffnn_deterministic(self):
        d = gen_scenario(ScenarioSpec("binary_inputs", 40, 2), np.random.default_rng(2))
        proc = FFNNProcedure(d.X, ModelConfig(2, decay=0.01))
        a = p_cv(proc, d, K=5, N=2, seed=3, threads=1)
        b = p_cv(proc, d, K=5, N=2, seed=3, threads=2)
        assert a == b


class TestLRT:
    def test_null_fit_zero(self):
        y = np.array([1.0, 0, 0, 1, 0])
        assert lrt_statistic(y, np.full(5, 0.4)) == pytest.approx(0.0, abs=1e-12)

    def test_perfect_two_point(self):
        val = lrt_statistic([1.0, 0.0], [1 - 1e-12, 1e-12])
        assert val == pytest.approx(4 * math.log(2), abs=1e-9)

    def test_matches_loglik_oracle(self, rng):
        y = rng.integers(0, 2, 30).astype(float)
        q = rng.uniform(0.05, 0.95, 30)
        ybar = y.mean()
        fitted = sum(math.log(qi) if yi else math.log(1 - qi) for yi, qi in zip(y, q))
        null = sum(math.log(ybar) if yi else math.log(1 - ybar) for yi in y)
        assert lrt_statistic(y, q) == pytest.approx(2 * (fitted - null), abs=1e-10)

    def test_single_class(self):
        assert lrt_statistic(np.zeros(4), np.full(4, 1e-12)) == pytest.approx(0.0, abs=1e-9)

    def test_length_mismatch(self):
        with pytest.raises(ValueError):
            lrt_statistic([1, 0], [0.5])


class TestNullDof:
    def _gen(self, rng):
        return gen_scenario(ScenarioSpec("binary_inputs", 30, 2), rng)

    def test_constant_mean_zero(self):
        est = null_dof(lambda d: ConstantMeanProcedure(d.n), self._gen, reps=10, seed=1)
        assert est.value == pytest.approx(0.0, abs=1e-9)

    def test_deterministic(self):
        proc = lambda d: FFNNProcedure(d.X, ModelConfig(2, decay=0.01))  # noqa: E731
        a = null_dof(proc, self._gen, reps=4, seed=5, threads=1)
        b = null_dof(proc, self._gen, reps=4, seed=5, threads=3)
        assert a == b and a.value > 0

    def test_single_class_counted(self):
        gen = lambda r: Dataset(r.normal(size=(5, 1)), np.zeros(5))  # noqa: E731
        est = null_dof(lambda d: ConstantMeanProcedure(d.n), gen, reps=3)
        assert est.value == 0.0 and est.internal_reps == 3

    def test_reps(self):
        with pytest.raises(ValueError):
            null_dof(lambda d: ConstantMeanProcedure(d.n), self._gen, reps=1)
