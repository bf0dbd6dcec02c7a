"""Multiclass vowel recognition with one GMM per vowel, and evaluation."""
from __future__ import annotations

import csv
import itertools
from dataclasses import dataclass, field

import numpy as np

from .gmm import EmConfig, GmmModel, em_fit
from .svm import KernelParams, SvmModel, smo_train, standardizer
from .platt import fit_sigmoid

VOWELS = ("a", "@", "o", "e", "i", "u", "au", "ei")


class RecognizerError(ValueError):
    pass


def display(label: str) -> str:
    return f"/{label}/"


def normalize_label(token: str) -> str:
    """Map ``/a/`` or ``a`` to the canonical vowel name; other tokens pass through."""
    t = token.strip()
    if len(t) > 2 and t.startswith("/") and t.endswith("/"):
        t = t[1:-1]
    return t


def is_vowel(label: str) -> bool:
    return normalize_label(label) in VOWELS


@dataclass
class TrainingSegment:
    """Frames of one labelled vowel, with soft-segment frame weights."""

    label: str
    rows: np.ndarray
    weights: np.ndarray | None = None


def train_vowel_models(segments, n_components: int = 4, config: EmConfig | None = None,
                       min_segments: int = 10, classes=VOWELS) -> dict[str, GmmModel]:
    config = config or EmConfig()
    by_class: dict[str, list[TrainingSegment]] = {c: [] for c in classes}
    for seg in segments:
        if seg.label not in by_class:
            raise RecognizerError(f"unknown vowel label {seg.label!r}")
        by_class[seg.label].append(seg)
    short = [c for c in classes if len(by_class[c]) < min_segments]
    if short:
        have = ", ".join(f"{display(c)}={len(by_class[c])}" for c in short)
        raise RecognizerError(f"too few training segments (need {min_segments}) for: {have}")
    models = {}
    for c in classes:
        segs = by_class[c]
        rows = np.vstack([s.rows for s in segs])
        weights = np.concatenate([np.ones(len(s.rows)) if s.weights is None else s.weights
                                  for s in segs])
        models[c] = em_fit(rows, weights, n_components, config, class_label=c)
    return models


def segment_scores(frames, models: dict[str, GmmModel]) -> dict[str, float]:
    """Mean per-frame log-likelihood of the segment under each model."""
    x = np.atleast_2d(frames)
    return {c: float(np.mean(m.log_pdf(x))) for c, m in models.items()}


def argmax_label(scores: dict[str, float], order=VOWELS) -> tuple[str, float]:
    """Highest score; ties resolved by the fixed label order."""
    best = None
    for c in order:
        if c in scores and (best is None or scores[c] > scores[best]):
            best = c
    return best, scores[best]


@dataclass
class PairwiseRefiner:
    """Calibrated pairwise SVMs used to re-rank the top two GMM candidates."""

    machines: dict = field(default_factory=dict)

    def prefer(self, a: str, b: str, frames) -> str:
        key = tuple(sorted((a, b), key=VOWELS.index))
        svm = self.machines.get(key)
        if svm is None:
            return a
        p_first = float(np.mean(svm.probability(np.atleast_2d(frames))))
        return key[0] if p_first >= 0.5 else key[1]


def train_pairwise_refiner(segments, C: float = 10.0, sigma: float = 4.0,
                           max_frames_per_class: int = 150, seed: int = 0) -> PairwiseRefiner:
    rng = np.random.default_rng(seed)
    frames = {}
    for c in VOWELS:
        rows = [s.rows if s.weights is None else s.rows[s.weights >= 1.0]
                for s in segments if s.label == c]
        x = np.vstack(rows)
        if len(x) > max_frames_per_class:
            x = x[np.sort(rng.choice(len(x), max_frames_per_class, replace=False))]
        frames[c] = x
    refiner = PairwiseRefiner()
    for a, b in itertools.combinations(VOWELS, 2):
        x = np.vstack([frames[a], frames[b]])
        y = np.concatenate([np.ones(len(frames[a])), -np.ones(len(frames[b]))])
        mean, std = standardizer(x)
        svm = smo_train(x, y, C, KernelParams(sigma), scaler=(mean, std))
        svm.platt = fit_sigmoid(svm.decision_value(x), y)
        refiner.machines[(a, b)] = svm
    return refiner


def classify_segment(frames, models: dict[str, GmmModel],
                     refiner: PairwiseRefiner | None = None) -> tuple[str, float]:
    x = np.atleast_2d(frames)
    if x.shape[0] == 0:
        raise RecognizerError("cannot classify an empty segment")
    scores = segment_scores(x, models)
    label, score = argmax_label(scores)
    if refiner is not None:
        ranked = sorted(scores, key=lambda c: (-scores[c], VOWELS.index(c)))
        if len(ranked) > 1:
            label = refiner.prefer(ranked[0], ranked[1], x)
            score = scores[label]
    return label, score


@dataclass
class ConfusionMatrix:
    """counts[recognized, uttered] over a fixed label order."""

    labels: tuple = VOWELS
    counts: np.ndarray = None

    def __post_init__(self):
        n = len(self.labels)
        if self.counts is None:
            self.counts = np.zeros((n, n), dtype=np.int64)

    def add(self, recognized: str, uttered: str) -> None:
        try:
            r, u = self.labels.index(recognized), self.labels.index(uttered)
        except ValueError:
            raise RecognizerError(f"unknown label in ({recognized!r}, {uttered!r})") from None
        self.counts[r, u] += 1

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    @property
    def accuracy(self) -> float:
        return float(np.trace(self.counts) / self.total) if self.total else float("nan")

    @property
    def percentages(self) -> np.ndarray:
        col = self.counts.sum(axis=0, keepdims=True)
        with np.errstate(invalid="ignore", divide="ignore"):
            return np.where(col > 0, 100.0 * self.counts / col, 0.0)

    def per_class_accuracy(self) -> dict[str, float]:
        col = self.counts.sum(axis=0)
        return {c: (float(self.counts[i, i] / col[i]) if col[i] else float("nan"))
                for i, c in enumerate(self.labels)}

    def to_text(self) -> str:
        pct = self.percentages
        names = [display(c) for c in self.labels]
        width = 7
        lines = [" " * 16 + "Uttered vowel",
                 " " * 16 + "".join(n.rjust(width) for n in names)]
        for i, n in enumerate(names):
            head = "Recognized" if i == 0 else ""
            lines.append(f"{head:<11}{n:<5}" + "".join(f"{v:{width}.1f}" for v in pct[i]))
        lines.append(f"overall accuracy: {100 * self.accuracy:.1f}% over {self.total} segments")
        return "\n".join(lines)

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["recognized\\uttered"] + [display(c) for c in self.labels])
            for i, c in enumerate(self.labels):
                writer.writerow([display(c)] + self.counts[i].tolist())


def evaluate(test_segments, models: dict[str, GmmModel],
             refiner: PairwiseRefiner | None = None) -> ConfusionMatrix:
    """``test_segments`` is an iterable of ``(truth_label, frames)`` pairs."""
    matrix = ConfusionMatrix()
    n = 0
    for truth, frames in test_segments:
        if truth not in VOWELS:
            raise RecognizerError(f"unknown truth label {truth!r}")
        label, _ = classify_segment(frames, models, refiner)
        matrix.add(label, truth)
        n += 1
    if n == 0:
        raise RecognizerError("empty test set")
    return matrix
