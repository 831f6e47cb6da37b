import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from ivdml import LearnerSpec, fit, predict, tune

OLS = LearnerSpec("ols")
SPLINE = LearnerSpec("additive_spline")
TREES = LearnerSpec("boosted_trees")


class TestSpec:
    def test_defaults_filled(self):
        assert SPLINE.params == {"knots": 8, "ridge": 1e-4}
        assert TREES.params["depth"] == 3
        assert TREES.params["learning_rate"] == 0.1
        assert TREES.params["rounds"] == 200
        assert TREES.params["min_leaf"] == 5

    def test_json_round_trip(self):
        spec = LearnerSpec("boosted_trees", {"depth": 4, "rounds": 50})
        again = LearnerSpec.from_json_dict(spec.to_json_dict())
        assert again == spec

    def test_unknown_kind(self):
        with pytest.raises(ValueError, match="unknown learner kind"):
            LearnerSpec("neural_net")

    def test_unknown_param(self):
        with pytest.raises(ValueError, match="unknown parameter"):
            LearnerSpec("ols", {"depth": 3})

    @pytest.mark.parametrize(
        "kind,params",
        [
            ("additive_spline", {"knots": -1}),
            ("additive_spline", {"ridge": -0.5}),
            ("boosted_trees", {"depth": 0}),
            ("boosted_trees", {"learning_rate": 1.5}),
            ("boosted_trees", {"min_leaf": 0}),
        ],
    )
    def test_out_of_range(self, kind, params):
        with pytest.raises(ValueError):
            LearnerSpec(kind, params)


def _linear_data(rng, m=50):
    X = rng.normal(size=(m, 2))
    y = 3.0 * X[:, 0] - 2.0 * X[:, 1] + 1.0
    return X, y


class TestOls:
    def test_exact_linear_recovery(self, rng):
        X, y = _linear_data(rng)
        model = fit(OLS, X, y)
        assert np.max(np.abs(model.predict(X) - y)) <= 1e-10

    def test_row_of_zeros_gives_intercept(self, rng):
        X, y = _linear_data(rng)
        model = fit(OLS, X, y)
        assert model.predict(np.zeros((1, 2)))[0] == pytest.approx(1.0, abs=1e-10)

    def test_rank_deficient_flagged_minimum_norm(self, rng):
        x = rng.normal(size=(30, 1))
        X = np.column_stack([x, x])  # duplicated column
        y = 2.0 * x[:, 0]
        model = fit(OLS, X, y)
        assert "rank_deficient" in model.flags
        assert np.all(np.isfinite(model.predict(X)))
        assert np.max(np.abs(model.predict(X) - y)) <= 1e-10

    def test_m_too_small(self):
        with pytest.raises(ValueError, match="at least"):
            fit(OLS, np.ones((2, 2)), np.ones(2))


class TestSpline:
    def test_sine_in_sample_rmse(self):
        x = np.linspace(-3, 3, 200)[:, None]
        y = np.sin(x[:, 0])
        model = fit(SPLINE, x, y)
        rmse = float(np.sqrt(np.mean((model.predict(x) - y) ** 2)))
        assert rmse <= 0.05

    def test_zero_knots_degenerates_to_ols(self, rng):
        X, y = _linear_data(rng, m=80)
        y = y + rng.normal(size=80)
        lin_spline = fit(LearnerSpec("additive_spline", {"knots": 0, "ridge": 0.0}), X, y)
        ols = fit(OLS, X, y)
        assert np.max(np.abs(lin_spline.predict(X) - ols.predict(X))) <= 1e-10

    def test_extrapolation_is_finite_and_tame(self, rng):
        x = rng.normal(size=(100, 1))
        model = fit(SPLINE, x, np.tanh(x[:, 0]))
        far = np.array([[-25.0], [25.0]])
        vals = model.predict(far)
        assert np.all(np.isfinite(vals))
        assert np.max(np.abs(vals)) < 50.0  # linear, not cubic, growth

    def test_constant_response(self, rng):
        x = rng.normal(size=(20, 1))
        model = fit(SPLINE, x, np.full(20, 3.25))
        assert "constant_response" in model.flags
        assert model.predict(x) == pytest.approx(np.full(20, 3.25), abs=1e-9)


class TestBoostedTrees:
    def test_training_mse_nonincreasing_in_rounds(self, rng):
        X = rng.normal(size=(120, 2))
        y = np.sin(X[:, 0]) + 0.5 * X[:, 1] + 0.1 * rng.normal(size=120)
        mses = []
        for rounds in (1, 2, 5, 10, 20, 40):
            model = fit(LearnerSpec("boosted_trees", {"rounds": rounds}), X, y)
            mses.append(float(np.mean((model.predict(X) - y) ** 2)))
        assert all(a >= b - 1e-12 for a, b in zip(mses, mses[1:]))

    def test_zero_learning_rate_predicts_mean(self, rng):
        X = rng.normal(size=(40, 2))
        y = rng.normal(size=40)
        model = fit(LearnerSpec("boosted_trees", {"learning_rate": 0.0, "rounds": 5}), X, y)
        assert model.predict(X) == pytest.approx(np.full(40, y.mean()), abs=1e-12)

    def test_fits_step_function(self, rng):
        x = rng.uniform(-1, 1, size=(300, 1))
        y = np.where(x[:, 0] > 0.2, 2.0, -1.0)
        model = fit(LearnerSpec("boosted_trees", {"rounds": 60}), x, y)
        assert float(np.mean((model.predict(x) - y) ** 2)) < 0.05

    def test_min_leaf_respected(self, rng):
        # with min_leaf equal to the sample size no split is possible
        X = rng.normal(size=(10, 1))
        y = rng.normal(size=10)
        model = fit(LearnerSpec("boosted_trees", {"min_leaf": 10, "rounds": 3}), X, y)
        assert model.predict(X) == pytest.approx(np.full(10, y.mean()), abs=1e-12)


class TestPredictContract:
    @pytest.mark.parametrize("spec", [OLS, SPLINE, LearnerSpec("boosted_trees", {"rounds": 10})])
    def test_pure_and_bit_identical(self, spec, rng):
        X = rng.normal(size=(60, 2))
        y = np.sin(X[:, 0]) + X[:, 1]
        m1 = fit(spec, X, y)
        m2 = fit(spec, X, y)
        assert m1.predict(X).tobytes() == m2.predict(X).tobytes()
        assert m1.predict(X).tobytes() == predict(m1, X).tobytes()

    @pytest.mark.parametrize("spec", [OLS, SPLINE, LearnerSpec("boosted_trees", {"rounds": 10})])
    def test_row_permutation_permutes_predictions(self, spec, rng):
        # row-wise map: equal up to BLAS reduction reordering across layouts
        X = rng.normal(size=(50, 2))
        y = X[:, 0] ** 2 + X[:, 1]
        model = fit(spec, X, y)
        perm = rng.permutation(50)
        np.testing.assert_allclose(
            model.predict(X)[perm], model.predict(X[perm]), rtol=1e-12, atol=1e-12
        )

    def test_dimension_mismatch(self, rng):
        X, y = _linear_data(rng)
        model = fit(OLS, X, y)
        with pytest.raises(ValueError, match="trained on 2 features"):
            model.predict(np.ones((3, 3)))

    def test_nonfinite_rejected(self):
        with pytest.raises(ValueError, match="finite"):
            fit(OLS, np.array([[1.0], [np.inf], [2.0]]), np.ones(3))


class TestTune:
    def test_singleton_grid(self, rng):
        X, y = _linear_data(rng)
        assert tune([SPLINE], X, y, folds=3, seed=1) == SPLINE

    def test_linear_data_prefers_ols(self, rng):
        X, y = _linear_data(rng, m=120)
        y = y + 0.01 * rng.normal(size=120)
        grid = [OLS, LearnerSpec("boosted_trees", {"depth": 4, "rounds": 40})]
        assert tune(grid, X, y, folds=4, seed=3) == OLS

    def test_deterministic(self, rng):
        X = rng.normal(size=(80, 2))
        y = np.sin(X[:, 0]) + rng.normal(size=80)
        grid = [OLS, SPLINE, LearnerSpec("boosted_trees", {"rounds": 20})]
        assert tune(grid, X, y, folds=4, seed=11) == tune(grid, X, y, folds=4, seed=11)

    def test_degenerate_response_warns(self, rng):
        X = rng.normal(size=(30, 2))
        grid = [SPLINE, OLS]
        with pytest.warns(UserWarning, match="zero variance"):
            choice = tune(grid, X, np.zeros(30), folds=3, seed=0)
        assert choice == SPLINE

    def test_empty_grid(self, rng):
        X, y = _linear_data(rng)
        with pytest.raises(ValueError, match="non-empty"):
            tune([], X, y, folds=3, seed=0)

    @given(st.integers(0, 2**32))
    def test_selection_is_grid_element(self, seed):
        rng = np.random.default_rng(seed % 1000)
        X = rng.normal(size=(40, 1))
        y = X[:, 0] + rng.normal(size=40)
        grid = [OLS, LearnerSpec("additive_spline", {"knots": 2})]
        assert tune(grid, X, y, folds=2, seed=seed) in grid
