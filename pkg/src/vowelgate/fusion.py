"""Score fusion and vowel boundary detection.

Per frame, the vowel curve is a convex combination of band-pass energy, the
Bayes-normalised GMM posterior and the calibrated SVM probability. The
non-vowel curve uses the complements of the same three scores, so the two
curves always sum to one and cross exactly where the vowel curve passes 0.5.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np
from scipy.special import expit

from .dsp import DspConfig, frame_edge_time
from .gmm import confidence_measure

UNLABELED = "Unlabeled"


class FusionError(ValueError):
    pass


@dataclass(frozen=True)
class FusionWeights:
    energy: float = 0.3
    gmm: float = 0.5
    svm: float = 0.2

    def __post_init__(self):
        w = (self.energy, self.gmm, self.svm)
        if any(not 0.0 <= v <= 1.0 for v in w):
            raise FusionError(f"fusion weights must lie in [0, 1], got {w}")
        if abs(sum(w) - 1.0) > 1e-12:
            raise FusionError(f"fusion weights must sum to 1, got {sum(w)!r}")


@dataclass(frozen=True)
class DetectorConfig:
    smoothing_width: int = 3
    threshold: float = 0.5
    min_duration: int = 3
    merge_gap: int = 2

    def __post_init__(self):
        if self.smoothing_width < 1 or self.smoothing_width % 2 == 0:
            raise FusionError("smoothing width must be a positive odd number of frames")
        if self.min_duration < 1 or self.merge_gap < 0:
            raise FusionError("min_duration must be >= 1 and merge_gap >= 0")


@dataclass
class VowelSegment:
    start_frame: int
    end_frame: int  # exclusive
    start_time: float
    end_time: float
    label: str = UNLABELED
    cm: float = 0.0
    score: float = float("nan")

    @property
    def n_frames(self) -> int:
        return self.end_frame - self.start_frame


@dataclass(frozen=True)
class FrameScores:
    """The three per-frame inputs to fusion."""

    energy: np.ndarray
    gmm_posterior: np.ndarray
    svm_probability: np.ndarray


def gmm_posterior(log_ratio, prior_vowel: float = 0.5, prior_nonvowel: float = 0.5):
    """P1 p1(x) / (P1 p1(x) + P2 p2(x)) from l = log p1 - log p2."""
    return expit(np.asarray(log_ratio) + np.log(prior_vowel) - np.log(prior_nonvowel))


def vowel_posterior(energy, gmm_post, svm_prob, weights: FusionWeights = FusionWeights()):
    return (weights.energy * np.asarray(energy) + weights.gmm * np.asarray(gmm_post)
            + weights.svm * np.asarray(svm_prob))


def nonvowel_posterior(energy, gmm_post, svm_prob, weights: FusionWeights = FusionWeights()):
    # equals w_e(1-G) + w_g(1-Pi) + w_s(1-P) since the weights sum to one
    return 1.0 - vowel_posterior(energy, gmm_post, svm_prob, weights)


def smooth(curve, width: int = 3) -> np.ndarray:
    """Centred moving average with edge frames repeated."""
    c = np.asarray(curve, dtype=np.float64)
    if width == 1 or c.size == 0:
        return c.copy()
    half = width // 2
    padded = np.pad(c, half, mode="edge")
    return np.convolve(padded, np.ones(width) / width, mode="valid")


def find_runs(mask) -> list[tuple[int, int]]:
    m = np.concatenate([[False], np.asarray(mask, dtype=bool), [False]])
    edges = np.flatnonzero(np.diff(m.astype(int)))
    return list(zip(edges[::2].tolist(), edges[1::2].tolist()))


def segment_curve(curve, config: DetectorConfig = DetectorConfig()) -> list[tuple[int, int]]:
    """Frame ranges ``[start, stop)`` where the smoothed vowel curve wins.

    Runs separated by fewer than ``merge_gap`` frames are merged before runs
    shorter than ``min_duration`` are dropped.
    """
    smoothed = smooth(curve, config.smoothing_width)
    runs = find_runs(smoothed > config.threshold)
    merged: list[list[int]] = []
    for start, stop in runs:
        if merged and start - merged[-1][1] < config.merge_gap:
            merged[-1][1] = stop
        else:
            merged.append([start, stop])
    return [(a, b) for a, b in merged if b - a >= config.min_duration]


def detect_segments(features, scores: FrameScores, models, weights: FusionWeights = FusionWeights(),
                    config: DetectorConfig = DetectorConfig(),
                    dsp_config: DspConfig = DspConfig()) -> list[VowelSegment]:
    """Detect vowel segments from fused frame scores.

    ``features`` are the (scaled) classifier rows used for the confidence
    measure; ``models`` is a ``(vowel_gmm, nonvowel_gmm)`` pair.
    """
    fused = vowel_posterior(scores.energy, scores.gmm_posterior, scores.svm_probability, weights)
    rows = np.atleast_2d(features)
    vowel_gmm, nonvowel_gmm = models
    segments = []
    for start, stop in segment_curve(fused, config):
        segments.append(VowelSegment(
            start, stop,
            float(frame_edge_time(start, dsp_config)), float(frame_edge_time(stop, dsp_config)),
            UNLABELED, confidence_measure(vowel_gmm, nonvowel_gmm, rows[start:stop])))
    return segments


def write_segments_csv(path, segments) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["start_time_s", "end_time_s", "label", "cm"])
        for s in segments:
            writer.writerow([f"{s.start_time:.4f}", f"{s.end_time:.4f}", s.label, f"{s.cm:.6f}"])


def read_segments_csv(path, dsp_config: DspConfig = DspConfig()) -> list[VowelSegment]:
    out = []
    offset = (dsp_config.frame_length - dsp_config.hop) / 2.0
    with open(path, newline="") as fh:
        for lineno, row in enumerate(csv.DictReader(fh), start=2):
            try:
                t0, t1 = float(row["start_time_s"]), float(row["end_time_s"])
            except (KeyError, TypeError, ValueError) as exc:
                raise FusionError(f"{path}:{lineno}: malformed segment row") from exc
            a = int(round((t0 * dsp_config.sample_rate - offset) / dsp_config.hop))
            b = int(round((t1 * dsp_config.sample_rate - offset) / dsp_config.hop))
            out.append(VowelSegment(max(a, 0), b, t0, t1, row.get("label") or UNLABELED,
                                    float(row.get("cm") or 0.0)))
    return out


def write_curve_csv(path, scores: FrameScores, weights: FusionWeights = FusionWeights()) -> None:
    fused = vowel_posterior(scores.energy, scores.gmm_posterior, scores.svm_probability, weights)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["frame", "G", "P_gmm", "P_psvm", "fused"])
        for k in range(len(fused)):
            writer.writerow([k, f"{scores.energy[k]:.6f}", f"{scores.gmm_posterior[k]:.6f}",
                             f"{scores.svm_probability[k]:.6f}", f"{fused[k]:.6f}"])
