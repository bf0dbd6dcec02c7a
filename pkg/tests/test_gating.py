import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from vowelgate.gating import (Decision, GatingError, GatingModel, calibrate_epsilon, decide, gate,
                              gate_many, gmm_score, select_svm_training_set, write_gating_report)
from vowelgate.gmm import GmmModel

from oracles import gaussian_mixture_density

VOWEL = GmmModel([1.0], [[1.0]], [[1.0]])
NONVOWEL = GmmModel([1.0], [[-1.0]], [[1.0]])


def linear_model(p1=0.5, eps=0.0):
    # with unit variances at +-1 the score is exactly l(x) = 2x
    return GatingModel(VOWEL, NONVOWEL, p1, 1.0 - p1, eps)


def x_for_score(score):
    return np.array([score / 2.0])


finite = st.floats(-1e6, 1e6, allow_nan=False)


class TestScore:
    def test_identical_models(self):
        m = GatingModel(VOWEL, VOWEL)
        assert np.all(gmm_score(m, np.array([[0.3], [-7.0], [12.0]])) == 0)

    def test_vowel_mode(self):
        assert gmm_score(linear_model(), np.array([1.0])) > 0

    def test_matches_independent_subtraction(self):
        rng = np.random.default_rng(0)
        v = GmmModel([0.3, 0.7], rng.normal(size=(2, 3)), rng.uniform(0.5, 2, (2, 3)))
        n = GmmModel([0.6, 0.4], rng.normal(size=(2, 3)), rng.uniform(0.5, 2, (2, 3)))
        m = GatingModel(v, n)
        for _ in range(20):
            x = rng.normal(size=3)
            expected = (math.log(gaussian_mixture_density(v.weights, v.means, v.variances, x))
                        - math.log(gaussian_mixture_density(n.weights, n.means, n.variances, x)))
            assert float(gmm_score(m, x)) == pytest.approx(expected, rel=1e-9)

    def test_dimension_mismatch(self):
        with pytest.raises(Exception):
            gmm_score(linear_model(), np.zeros(2))


class TestGate:
    def test_equal_priors(self):
        assert gate(linear_model(), x_for_score(0.1)).decision == Decision.ACCEPT_VOWEL

    def test_inside_margin(self):
        assert gate(linear_model(eps=0.5), x_for_score(0.1)).decision == Decision.AMBIGUOUS

    def test_unequal_priors(self):
        m = linear_model(p1=0.2)
        assert m.tau == pytest.approx(math.log(4))
        assert m.tau == pytest.approx(1.386, abs=1e-3)
        d = gate(m, x_for_score(1.0))
        assert d.decision == Decision.ACCEPT_NONVOWEL
        assert d.score == pytest.approx(1.0)

    def test_priors_must_sum_to_one(self):
        with pytest.raises(GatingError):
            GatingModel(VOWEL, NONVOWEL, 0.3, 0.6)

    def test_negative_epsilon(self):
        with pytest.raises(GatingError):
            linear_model(eps=-0.1)

    def test_gate_many_matches_gate(self):
        m = linear_model(p1=0.3, eps=0.2)
        xs = np.linspace(-2, 2, 41)[:, None]
        decisions, _ = gate_many(m, xs)
        assert decisions.tolist() == [int(gate(m, x).decision) for x in xs]


class TestProperties:
    @settings(max_examples=200, deadline=None)
    @given(finite, st.floats(-50, 50), st.floats(0, 50))
    def test_partition(self, score, tau, eps):
        d = int(decide(score, tau, eps))
        checks = [score > tau + eps, score < tau - eps, tau - eps <= score <= tau + eps]
        assert sum(checks) == 1
        assert d == [Decision.ACCEPT_VOWEL, Decision.ACCEPT_NONVOWEL, Decision.AMBIGUOUS][checks.index(True)]

    @settings(max_examples=200, deadline=None)
    @given(finite, st.floats(0, 1e3), st.floats(-50, 50), st.floats(0, 50))
    def test_monotone_in_score(self, score, bump, tau, eps):
        assert decide(score + bump, tau, eps) >= decide(score, tau, eps)

    @settings(max_examples=200, deadline=None)
    @given(st.lists(finite, min_size=1, max_size=50), st.floats(-5, 5),
           st.floats(0, 10), st.floats(0, 10))
    def test_epsilon_monotone(self, scores, tau, e1, e2):
        lo, hi = sorted((e1, e2))
        amb_lo = decide(scores, tau, lo) == Decision.AMBIGUOUS
        amb_hi = decide(scores, tau, hi) == Decision.AMBIGUOUS
        assert np.all(amb_hi[amb_lo])

    @settings(max_examples=200, deadline=None)
    @given(st.floats(0.01, 100), st.floats(0.01, 100), st.floats(1e-3, 1e3),
           st.lists(st.floats(-10, 10), min_size=1, max_size=20), st.floats(0, 2))
    def test_prior_scale_invariance(self, p1, p2, c, xs, eps):
        a = GatingModel.from_unnormalized(VOWEL, NONVOWEL, p1, p2, eps)
        b = GatingModel.from_unnormalized(VOWEL, NONVOWEL, c * p1, c * p2, eps)
        rows = np.array(xs)[:, None]
        scores = gmm_score(a, rows)
        # skip the measure-zero case of a score sitting on a band edge
        edges = np.array([a.tau - eps, a.tau + eps])
        keep = np.min(np.abs(scores[:, None] - edges), axis=1) > 1e-9
        np.testing.assert_array_equal(gate_many(a, rows)[0][keep], gate_many(b, rows)[0][keep])


class TestSelection:
    def setup_method(self):
        rng = np.random.default_rng(1)
        self.rows = np.concatenate([rng.normal(-3, 1, 200), rng.normal(3, 1, 200)])[:, None]
        self.labels = np.repeat([-1, 1], 200)

    def test_subset_inside_band(self):
        m = linear_model(eps=1.0)
        x, y, mask = select_svm_training_set(m, self.rows, self.labels)
        assert len(x) < len(self.rows) and len(x) == mask.sum()
        assert np.all(np.abs(gmm_score(m, x) - m.tau) <= 1.0)
        np.testing.assert_array_equal(y, self.labels[mask])

    def test_large_epsilon_keeps_everything(self):
        x, _, mask = select_svm_training_set(linear_model(eps=1e6), self.rows, self.labels)
        assert mask.all() and len(x) == len(self.rows)

    def test_zero_epsilon_is_empty(self):
        with pytest.raises(GatingError, match="larger epsilon"):
            select_svm_training_set(linear_model(eps=0.0), self.rows, self.labels)


class TestCalibration:
    def setup_method(self):
        self.scores = np.random.default_rng(2).normal(0.3, 2.0, 1000)
        self.model = linear_model(p1=0.4)

    def test_full_fraction(self):
        eps = calibrate_epsilon(self.model, target_fraction=1.0, scores=self.scores)
        assert eps == pytest.approx(np.max(np.abs(self.scores - self.model.tau)), abs=1e-4)

    def test_tiny_fraction(self):
        eps = calibrate_epsilon(self.model, target_fraction=1e-6, scores=self.scores)
        dist = np.sort(np.abs(self.scores - self.model.tau))
        assert eps <= dist[0] + 1e-4

    def test_quantile_oracle(self):
        eps = calibrate_epsilon(self.model, target_fraction=0.3, scores=self.scores)
        dist = np.sort(np.abs(self.scores - self.model.tau))
        # the smallest eps covering 30% of the points is the 300th smallest distance
        assert dist[299] <= eps <= dist[299] + 1e-4
        assert np.mean(dist <= eps) >= 0.3

    def test_from_rows(self):
        rows = x_for_score(self.scores).reshape(-1, 1)
        assert calibrate_epsilon(self.model, rows, target_fraction=0.3) == pytest.approx(
            calibrate_epsilon(self.model, target_fraction=0.3, scores=gmm_score(self.model, rows)))

    @pytest.mark.parametrize("target", [0.0, 1.5, -0.2])
    def test_unreachable(self, target):
        with pytest.raises(GatingError):
            calibrate_epsilon(self.model, target_fraction=target, scores=self.scores)

    def test_empty(self):
        with pytest.raises(GatingError):
            calibrate_epsilon(self.model, scores=np.zeros(0))


def test_report(tmp_path):
    path = tmp_path / "gate.csv"
    write_gating_report(path, np.array([-2.0, 0.0, 2.0]), 0.0, 0.5)
    lines = path.read_text().splitlines()
    assert lines[0] == "frame_index,l,tau,decision"
    assert [ln.split(",")[-1] for ln in lines[1:]] == ["ACCEPT_NONVOWEL", "AMBIGUOUS", "ACCEPT_VOWEL"]
