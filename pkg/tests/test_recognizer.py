import numpy as np
import pytest

from vowelgate.gmm import GmmModel
from vowelgate.recognizer import (VOWELS, ConfusionMatrix, RecognizerError, TrainingSegment,
                                  argmax_label, classify_segment, evaluate, normalize_label,
                                  segment_scores, train_vowel_models, train_pairwise_refiner)

CENTRES = {c: np.array([3.0 * i, -2.0 * i]) for i, c in enumerate(VOWELS)}


def synthetic_segments(rng, per_class=12, frames=15):
    return [TrainingSegment(c, rng.normal(CENTRES[c], 0.5, (frames, 2)))
            for c in VOWELS for _ in range(per_class)]


@pytest.fixture(scope="module")
def models():
    return train_vowel_models(synthetic_segments(np.random.default_rng(0)), n_components=2)


class TestTraining:
    def test_missing_classes_are_named(self):
        segs = [TrainingSegment("a", np.zeros((5, 2))) for _ in range(10)]
        with pytest.raises(RecognizerError) as err:
            train_vowel_models(segs, n_components=1)
        msg = str(err.value)
        for c in VOWELS[1:]:
            assert f"/{c}/" in msg
        assert "/a/=" not in msg

    def test_unknown_label(self):
        with pytest.raises(RecognizerError):
            train_vowel_models([TrainingSegment("x", np.zeros((5, 2)))])

    def test_modes_near_class_means(self, models):
        for c, m in models.items():
            mode = m.means[np.argmax(m.weights)]
            assert np.linalg.norm(mode - CENTRES[c]) < 0.5

    def test_duplicated_data(self):
        segs = synthetic_segments(np.random.default_rng(1), per_class=10)
        once = train_vowel_models(segs, n_components=1)
        twice = train_vowel_models(segs + segs, n_components=1)
        for c in VOWELS:
            np.testing.assert_allclose(twice[c].means, once[c].means, rtol=1e-10)
            np.testing.assert_allclose(twice[c].variances, once[c].variances, rtol=1e-10)


class TestClassify:
    def test_at_mode(self, models):
        m = models["i"]
        mode = m.means[np.argmax(m.weights)]
        assert classify_segment(np.tile(mode, (4, 1)), models)[0] == "i"

    def test_tie_break(self):
        m = GmmModel([1.0], [[0.0]], [[1.0]])
        same = {c: m for c in VOWELS}
        assert classify_segment(np.zeros((3, 1)), same)[0] == "a"
        assert argmax_label({"u": 1.0, "o": 1.0, "e": 0.0})[0] == "o"

    def test_shift_invariance(self):
        scores = {"a": -3.0, "@": -1.0, "o": -2.0}
        shifted = {c: s + 123.4 for c, s in scores.items()}
        assert argmax_label(scores)[0] == argmax_label(shifted)[0] == "@"

    def test_brute_force_likelihood(self, models):
        rng = np.random.default_rng(2)
        for c in VOWELS:
            frames = rng.normal(CENTRES[c], 1.5, (6, 2))
            expected = {k: np.mean([m.log_pdf(f) for f in frames]) for k, m in models.items()}
            best = max(VOWELS, key=lambda k: (expected[k], -VOWELS.index(k)))
            assert classify_segment(frames, models)[0] == best
            got = segment_scores(frames, models)
            for k in VOWELS:
                assert got[k] == pytest.approx(expected[k], rel=1e-12)

    def test_empty_segment(self, models):
        with pytest.raises(RecognizerError):
            classify_segment(np.zeros((0, 2)), models)

    def test_refiner_keeps_clear_decisions(self, models):
        rng = np.random.default_rng(3)
        refiner = train_pairwise_refiner(synthetic_segments(rng, per_class=3), max_frames_per_class=30)
        for c in VOWELS:
            assert classify_segment(rng.normal(CENTRES[c], 0.3, (8, 2)), models, refiner)[0] == c


class TestConfusion:
    def test_perfect(self, models):
        rng = np.random.default_rng(4)
        tests = [(c, rng.normal(CENTRES[c], 0.3, (8, 2))) for c in VOWELS for _ in range(3)]
        cm = evaluate(tests, models)
        assert cm.accuracy == 1.0 and cm.total == 24
        assert np.array_equal(cm.counts, 3 * np.eye(8, dtype=int))
        np.testing.assert_allclose(np.diag(cm.percentages), 100.0)

    def test_single_segment(self, models):
        cm = evaluate([("o", np.tile(CENTRES["o"], (5, 1)))], models)
        assert np.count_nonzero(cm.counts) == 1

    def test_orientation_and_percentages(self):
        cm = ConfusionMatrix()
        cm.add("a", "a")
        cm.add("o", "a")
        cm.add("o", "o")
        cm.add("o", "o")
        assert cm.counts[VOWELS.index("o"), VOWELS.index("a")] == 1
        assert cm.per_class_accuracy()["a"] == 0.5
        assert cm.accuracy == pytest.approx(0.75)
        col = cm.percentages.sum(axis=0)
        assert np.all(col <= 100 + 1e-9)

    def test_text_layout(self):
        cm = ConfusionMatrix()
        cm.add("ei", "ei")
        text = cm.to_text()
        assert "Uttered" in text and "Recognized" in text
        assert "/ei/" in text.splitlines()[1]
        assert len(text.splitlines()) == 2 + 8 + 1

    def test_unknown_truth(self, models):
        with pytest.raises(RecognizerError):
            evaluate([("x", np.zeros((2, 2)))], models)

    def test_empty(self, models):
        with pytest.raises(RecognizerError):
            evaluate([], models)

    def test_csv(self, tmp_path):
        cm = ConfusionMatrix()
        cm.add("a", "u")
        cm.write_csv(tmp_path / "m.csv")
        rows = (tmp_path / "m.csv").read_text().splitlines()
        assert len(rows) == 9 and rows[1].split(",")[VOWELS.index("u") + 1] == "1"


def test_normalize_label():
    assert normalize_label(" /au/ ") == "au"
    assert normalize_label("sil") == "sil"
