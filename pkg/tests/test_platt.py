import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from vowelgate.platt import (PlattError, PlattParams, fit_sigmoid, gradient, objective,
                             platt_targets, posterior)

from oracles import platt_grid_search, platt_objective, sigmoid_posterior


def overlapping_instance(rng, n):
    y = np.where(rng.random(n) < 0.5, 1, -1)
    y[:2] = [1, -1]
    f = rng.normal(0.7 * y, 1.0)
    return f, y


class TestTargets:
    def test_three_and_three(self):
        t = platt_targets([1, 1, 1, -1, -1, -1])
        np.testing.assert_allclose(t, [0.8] * 3 + [0.2] * 3, rtol=1e-15)

    def test_one_each(self):
        t = platt_targets([1, -1])
        assert t[0] == pytest.approx(2 / 3, rel=1e-15)
        assert t[1] == pytest.approx(1 / 3, rel=1e-15)

    @settings(max_examples=50, deadline=None)
    @given(st.integers(1, 500), st.integers(1, 500))
    def test_formula(self, n_plus, n_minus):
        t = platt_targets([1] * n_plus + [-1] * n_minus, n_plus, n_minus)
        assert t[0] == (n_plus + 1) / (n_plus + 2)
        assert t[-1] == 1 / (n_minus + 2)
        assert np.all((t > 0) & (t < 1))

    def test_mismatched_counts(self):
        with pytest.raises(PlattError):
            platt_targets([1, 1, -1], n_plus=1, n_minus=2)

    def test_single_class(self):
        with pytest.raises(PlattError):
            platt_targets([1, 1, 1])


class TestPosterior:
    def test_example(self):
        assert posterior(PlattParams(-2.0, 1.0), 3.0) == pytest.approx(0.993307, abs=1e-6)

    def test_oracle(self):
        rng = np.random.default_rng(0)
        for _ in range(20):
            A, B, f = rng.normal(0, 3, 3)
            assert posterior(PlattParams(A, B), f) == pytest.approx(sigmoid_posterior(A, B, f), rel=1e-9)

    def test_no_overflow(self):
        f = np.linspace(-1e3, 1e3, 2001)
        with np.errstate(over="raise", invalid="raise", divide="raise"):
            p = posterior(PlattParams(-5.0, 0.3), f)
        assert np.all(np.isfinite(p)) and np.all((p >= 0) & (p <= 1))

    @settings(max_examples=100, deadline=None)
    @given(st.floats(-50, -1e-3), st.floats(-10, 10), st.floats(-100, 100), st.floats(0, 10))
    def test_monotone_for_negative_slope(self, A, B, f, df):
        params = PlattParams(A, B)
        assert posterior(params, f + df) >= posterior(params, f)


class TestFit:
    def test_symmetric_data_has_zero_offset(self):
        f = np.array([-2.0, -1.0, -0.5, 0.5, 1.0, 2.0, -0.3, 0.3])
        y = np.where(f > 0, 1, -1)
        y[6], y[7] = 1, -1
        params = fit_sigmoid(f, y)
        assert params.B == pytest.approx(0.0, abs=1e-9)
        assert params.A < 0

    def test_gradient_vanishes(self):
        rng = np.random.default_rng(1)
        f, y = overlapping_instance(rng, 200)
        params = fit_sigmoid(f, y)
        g = gradient(params.A, params.B, f, platt_targets(y))
        assert np.max(np.abs(g)) <= 1e-8

    @pytest.mark.parametrize("seed", range(5))
    def test_matches_grid_oracle(self, seed):
        rng = np.random.default_rng(10 + seed)
        f, y = overlapping_instance(rng, 60)
        t = platt_targets(y)
        params = fit_sigmoid(f, y)
        _, _, grid_obj = platt_grid_search(f, t)
        assert objective(params.A, params.B, f, t) == pytest.approx(grid_obj, abs=1e-3)
        assert objective(params.A, params.B, f, t) <= grid_obj + 1e-12

    def test_objective_matches_plain_sum(self):
        rng = np.random.default_rng(2)
        f, y = overlapping_instance(rng, 30)
        t = platt_targets(y)
        assert objective(-1.2, 0.4, f, t) == pytest.approx(platt_objective(-1.2, 0.4, f, t), rel=1e-12)

    def test_separable_stays_finite(self):
        f = np.array([-3.0, -2.0, -1.0, 1.0, 2.0, 3.0])
        y = np.array([-1, -1, -1, 1, 1, 1])
        params = fit_sigmoid(f, y)
        assert np.isfinite(params.A) and np.isfinite(params.B)
        # regularised targets keep the slope bounded
        assert -20 < params.A < 0

    def test_rejects_non_finite(self):
        with pytest.raises(PlattError):
            fit_sigmoid([0.0, np.nan], [1, -1])

    def test_rejects_length_mismatch(self):
        with pytest.raises(PlattError):
            fit_sigmoid([0.0, 1.0, 2.0], [1, -1])

    def test_round_trip(self):
        p = PlattParams(-1.25, 0.5)
        assert PlattParams.from_dict(p.to_dict()) == p
