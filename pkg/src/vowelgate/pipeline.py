"""End-to-end training, detection, classification and evaluation."""
from __future__ import annotations

import json
import logging
import os
import shutil
import tempfile
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .config import PipelineConfig
from .corpus import LabeledUtterance, frame_labels, vowel_frame_ranges
from .dsp import AudioBuffer, Features, extract_features, frame_center_time, frame_edge_time
from .fusion import FrameScores, VowelSegment, detect_segments, gmm_posterior
from .gating import GatingModel, calibrate_epsilon, gmm_score, select_svm_training_set
from .gmm import EmConfig, GmmModel, em_fit, soft_segment_weights
from .recognizer import (VOWELS, ConfusionMatrix, PairwiseRefiner, TrainingSegment,
                         classify_segment, is_vowel, normalize_label, train_pairwise_refiner,
                         train_vowel_models)
from .svm import SvmModel, train_calibrated

log = logging.getLogger(__name__)


class PipelineError(RuntimeError):
    pass


@dataclass
class Scaler:
    mean: np.ndarray
    std: np.ndarray

    @classmethod
    def fit(cls, rows):
        rows = np.asarray(rows, dtype=np.float64)
        std = rows.std(axis=0)
        return cls(rows.mean(axis=0), np.where(std > 0, std, 1.0))

    def __call__(self, rows):
        return (np.asarray(rows, dtype=np.float64) - self.mean) / self.std

    def to_dict(self):
        return {"mean": self.mean.tolist(), "std": self.std.tolist()}

    @classmethod
    def from_dict(cls, doc):
        return cls(np.asarray(doc["mean"], dtype=np.float64), np.asarray(doc["std"], dtype=np.float64))


@dataclass
class UtteranceData:
    utt: LabeledUtterance
    features: Features
    labels: list  # per frame
    intervals: list  # (start_frame, stop_frame, label) for every labelled interval


def prepare(utts, config: PipelineConfig) -> list[UtteranceData]:
    out = []
    for utt in utts:
        feats = extract_features(utt.audio, config.dsp)
        n = len(feats)
        labels = frame_labels(utt, n, config.dsp)
        out.append(UtteranceData(utt, feats, labels, list(_interval_frames(utt, n, config))))
    return out


def _interval_frames(utt, n, config):
    centers = frame_center_time(np.arange(n), config.dsp)
    for a, b, lab in utt.labels:
        idx = np.flatnonzero((centers >= a) & (centers < b))
        if idx.size:
            yield int(idx[0]), int(idx[-1]) + 1, lab


def class_frame_weights(data: UtteranceData, context: int):
    """Soft-segment weights of every frame for the vowel and non-vowel classes."""
    n = len(data.features)
    vowel = np.zeros(n)
    nonvowel = np.zeros(n)
    covered = np.zeros(n, dtype=bool)
    for start, stop, lab in data.intervals:
        w = soft_segment_weights((start, stop), context, n).dense(n)
        target = vowel if is_vowel(lab) else nonvowel
        np.maximum(target, w, out=target)
        covered[start:stop] = True
    nonvowel[~covered] = 1.0
    return vowel, nonvowel


@dataclass
class TrainReport:
    n_train_frames: int = 0
    n_vowel_frames: int = 0
    prior_vowel: float = 0.0
    epsilon: float = 0.0
    pool_size: int = 0
    gated_size: int = 0
    C: float = 0.0
    sigma: float = 0.0
    cv_accuracy: float = 0.0
    sv_gated: int = 0
    sv_ungated: int | None = None
    ungated_C: float | None = None
    ungated_sigma: float | None = None
    platt: dict = field(default_factory=dict)

    def to_dict(self):
        return dict(self.__dict__)


@dataclass
class ModelBundle:
    config: PipelineConfig
    scaler: Scaler
    gating: GatingModel
    svm: SvmModel
    vowel_models: dict
    refiner: PairwiseRefiner | None = None
    report: TrainReport = field(default_factory=TrainReport)

    def scores(self, features: Features):
        """Scaled rows plus the three fusion inputs for every frame."""
        rows = self.scaler(features.matrix)
        l = gmm_score(self.gating, rows)
        svm_prob = self.svm.probability(rows)
        fs = FrameScores(features.bandpass,
                         gmm_posterior(l, self.gating.prior_vowel, self.gating.prior_nonvowel),
                         np.atleast_1d(svm_prob))
        return rows, fs

    def detect(self, audio: AudioBuffer):
        features = extract_features(audio, self.config.dsp)
        rows, fs = self.scores(features)
        segs = detect_segments(rows, fs, (self.gating.gmm_vowel, self.gating.gmm_nonvowel),
                               self.config.fusion, self.config.detector, self.config.dsp)
        return segs, fs, rows

    def classify(self, rows, segments: list[VowelSegment]) -> list[VowelSegment]:
        for seg in segments:
            frames = rows[seg.start_frame:seg.end_frame]
            if len(frames) == 0:
                raise PipelineError(f"segment {seg.start_time:.3f}-{seg.end_time:.3f}s has no frames")
            seg.label, seg.score = classify_segment(frames, self.vowel_models, self.refiner)
        return segments

    def recognize(self, audio: AudioBuffer) -> list[VowelSegment]:
        segs, _, rows = self.detect(audio)
        return self.classify(rows, segs)


def train(utts, config: PipelineConfig, progress=None) -> ModelBundle:
    say = progress or (lambda msg: log.info(msg))
    config.validate()
    data = prepare(utts, config)
    all_rows = np.vstack([d.features.matrix for d in data])
    scaler = Scaler.fit(all_rows)
    rows = scaler(all_rows)
    hard = np.array([is_vowel(lab) for d in data for lab in d.labels])
    if hard.all() or not hard.any():
        raise PipelineError("training data needs both vowel and non-vowel frames")

    em = EmConfig(config.gmm.max_iter, config.gmm.tol, config.gmm.var_floor,
                  config.gmm.kmeans_iter, config.seed)
    wv, wn = zip(*(class_frame_weights(d, config.gmm.soft_context) for d in data))
    wv, wn = np.concatenate(wv), np.concatenate(wn)
    say(f"fitting vowel GMM ({config.gmm.scaled(config.gmm.vowel_components)} components)")
    gmm_v = em_fit(rows, wv, config.gmm.scaled(config.gmm.vowel_components), em, "vowel")
    say(f"fitting non-vowel GMM ({config.gmm.scaled(config.gmm.nonvowel_components)} components)")
    gmm_n = em_fit(rows, wn, config.gmm.scaled(config.gmm.nonvowel_components), em, "nonvowel")

    p1 = config.gating.prior_vowel if config.gating.prior_vowel is not None else float(hard.mean())
    gating = GatingModel(gmm_v, gmm_n, p1, 1.0 - p1, 0.0)

    rng = np.random.default_rng(config.seed)
    pool = np.arange(len(rows))
    if len(pool) > config.svm.pool_size:
        pool = np.sort(rng.choice(len(rows), config.svm.pool_size, replace=False))
    pool_x, pool_y = rows[pool], np.where(hard[pool], 1.0, -1.0)
    pool_scores = gmm_score(gating, pool_x)
    eps = config.gating.epsilon
    if eps is None:
        eps = calibrate_epsilon(gating, target_fraction=config.gating.target_ambiguous_fraction,
                                scores=pool_scores)
    gating = gating.with_epsilon(eps)
    gx, gy, _ = select_svm_training_set(gating, pool_x, pool_y, scores=pool_scores)
    if len(np.unique(gy)) < 2:
        raise PipelineError("ambiguous set holds a single class; raise the ambiguous fraction")
    say(f"training gated SVM on {len(gx)} of {len(pool_x)} frames (epsilon={eps:.4f})")
    svm, cv = train_calibrated(gx, gy, config.svm.C_grid, config.svm.sigma_grid,
                               config.svm.folds, config.svm.tol, config.seed)

    report = TrainReport(len(rows), int(hard.sum()), p1, eps, len(pool_x), len(gx),
                         cv.C, cv.sigma, cv.accuracy, svm.n_support, None, svm.platt.to_dict())
    if config.svm.compare_ungated:
        # same procedure (own scaling, own cross-validation) on the whole pool
        say(f"training ungated SVM on all {len(pool_x)} pool frames for comparison")
        full, full_cv = train_calibrated(pool_x, pool_y, config.svm.C_grid, config.svm.sigma_grid,
                                         config.svm.folds, config.svm.tol, config.seed)
        report.sv_ungated = full.n_support
        report.ungated_C, report.ungated_sigma = full_cv.C, full_cv.sigma

    say("fitting per-vowel GMMs")
    segments = vowel_training_segments(data, rows, config.recognizer.soft_context)
    vowel_models = train_vowel_models(segments, config.recognizer.components, em,
                                      config.recognizer.min_segments)
    refiner = None
    if config.recognizer.pairwise_refinement:
        say("training pairwise refinement SVMs")
        refiner = train_pairwise_refiner(segments, seed=config.seed)
    return ModelBundle(config, scaler, gating, svm, vowel_models, refiner, report)


def vowel_training_segments(data, rows, context: int) -> list[TrainingSegment]:
    out = []
    offset = 0
    for d in data:
        n = len(d.features)
        for start, stop, lab in d.intervals:
            if not is_vowel(lab):
                continue
            sw = soft_segment_weights((start, stop), context, n)
            out.append(TrainingSegment(normalize_label(lab), rows[offset + sw.frames], sw.weights))
        offset += n
    return out


@dataclass
class DetectionStats:
    n_true: int = 0
    n_detected: int = 0
    n_hits: int = 0
    n_false_alarms: int = 0
    boundary_errors: list = field(default_factory=list)

    @property
    def hit_rate(self):
        return self.n_hits / self.n_true if self.n_true else float("nan")

    @property
    def false_alarm_rate(self):
        return self.n_false_alarms / self.n_true if self.n_true else float("nan")

    def to_dict(self):
        errs = np.asarray(self.boundary_errors) if self.boundary_errors else np.zeros((0, 2))
        return {"n_true": self.n_true, "n_detected": self.n_detected, "n_hits": self.n_hits,
                "n_false_alarms": self.n_false_alarms, "hit_rate": self.hit_rate,
                "false_alarm_rate": self.false_alarm_rate,
                "mean_abs_boundary_error_frames": float(np.mean(np.abs(errs))) if errs.size else None}


def score_detection(truth, detected, tolerance: int = 2) -> DetectionStats:
    """Match detected frame ranges against truth vowel ranges.

    A truth segment is a hit when the detected segment overlapping it most
    has both boundaries within ``tolerance`` frames. A detected segment
    overlapping no truth vowel is a false alarm.
    """
    stats = DetectionStats(len(truth), len(detected))
    for a, b in truth:
        best, overlap = None, 0
        for s, e in detected:
            ov = min(b, e) - max(a, s)
            if ov > overlap:
                best, overlap = (s, e), ov
        if best is not None:
            err = (best[0] - a, best[1] - b)
            stats.boundary_errors.append(err)
            if abs(err[0]) <= tolerance and abs(err[1]) <= tolerance:
                stats.n_hits += 1
    for s, e in detected:
        if not any(min(b, e) - max(a, s) > 0 for a, b in truth):
            stats.n_false_alarms += 1
    return stats


@dataclass
class Evaluation:
    matrix: ConfusionMatrix
    detection: DetectionStats

    def summary(self) -> dict:
        return {"accuracy": self.matrix.accuracy,
                "per_class_accuracy": self.matrix.per_class_accuracy(),
                "n_segments": self.matrix.total,
                "detection": self.detection.to_dict()}


def evaluate(bundle: ModelBundle, utts, detection_tolerance: int = 2) -> Evaluation:
    """Classify every labelled vowel segment and score the detector."""
    matrix = ConfusionMatrix()
    det = DetectionStats()
    for utt in utts:
        feats = extract_features(utt.audio, bundle.config.dsp)
        rows, fs = bundle.scores(feats)
        truth = vowel_frame_ranges(utt, len(feats), bundle.config.dsp)
        for start, stop, lab in truth:
            label, _ = classify_segment(rows[start:stop], bundle.vowel_models, bundle.refiner)
            matrix.add(label, lab)
        segs = detect_segments(rows, fs, (bundle.gating.gmm_vowel, bundle.gating.gmm_nonvowel),
                               bundle.config.fusion, bundle.config.detector, bundle.config.dsp)
        s = score_detection([(a, b) for a, b, _ in truth],
                            [(g.start_frame, g.end_frame) for g in segs], detection_tolerance)
        det.n_true += s.n_true
        det.n_detected += s.n_detected
        det.n_hits += s.n_hits
        det.n_false_alarms += s.n_false_alarms
        det.boundary_errors.extend(s.boundary_errors)
    if matrix.total == 0:
        raise PipelineError("test set contains no vowel segments")
    return Evaluation(matrix, det)


# -- bundle persistence ---------------------------------------------------

def _write_json(path, doc):
    with open(path, "w") as fh:
        json.dump(doc, fh)


def save_bundle(bundle: ModelBundle, directory) -> Path:
    """Write the bundle atomically: build in a temp dir, then rename."""
    directory = Path(directory)
    directory.parent.mkdir(parents=True, exist_ok=True)
    tmp = Path(tempfile.mkdtemp(prefix=f".{directory.name}.", dir=directory.parent))
    try:
        files = {"config": "config.json", "scaler": "scaler.json", "gmm_vowel": "gmm_vowel.json",
                 "gmm_nonvowel": "gmm_nonvowel.json", "svm": "svm.json", "report": "train_report.json"}
        bundle.config.save(tmp / files["config"])
        _write_json(tmp / files["scaler"], bundle.scaler.to_dict())
        bundle.gating.gmm_vowel.save(tmp / files["gmm_vowel"])
        bundle.gating.gmm_nonvowel.save(tmp / files["gmm_nonvowel"])
        bundle.svm.save(tmp / files["svm"])
        _write_json(tmp / files["report"], bundle.report.to_dict())
        (tmp / "vowels").mkdir()
        vowel_files = {}
        for i, (c, m) in enumerate(bundle.vowel_models.items()):
            name = f"vowels/{i:02d}.json"
            m.save(tmp / name)
            vowel_files[c] = name
        pair_files = {}
        if bundle.refiner is not None:
            (tmp / "pairwise").mkdir()
            for (a, b), m in bundle.refiner.machines.items():
                name = f"pairwise/{VOWELS.index(a)}_{VOWELS.index(b)}.json"
                m.save(tmp / name)
                pair_files[f"{a}|{b}"] = name
        manifest = {
            "version": __version__,
            "files": files,
            "vowel_models": vowel_files,
            "pairwise": pair_files,
            "gating": {"prior_vowel": bundle.gating.prior_vowel,
                       "prior_nonvowel": bundle.gating.prior_nonvowel,
                       "epsilon": bundle.gating.epsilon},
            "config_hash": bundle.config.config_hash(),
            "dsp_hash": bundle.config.dsp_hash(),
        }
        _write_json(tmp / "manifest.json", manifest)
        if directory.exists():
            shutil.rmtree(directory)
        os.replace(tmp, directory)
    except BaseException:
        shutil.rmtree(tmp, ignore_errors=True)
        raise
    return directory


def load_bundle(directory, expect_config: PipelineConfig | None = None) -> ModelBundle:
    directory = Path(directory)
    manifest_path = directory / "manifest.json"
    if not manifest_path.is_file():
        raise PipelineError(f"no model bundle at {directory} (missing manifest.json); run 'train' first")
    with open(manifest_path) as fh:
        manifest = json.load(fh)
    files = manifest["files"]
    for key, name in {**files, **manifest["vowel_models"], **manifest.get("pairwise", {})}.items():
        if not (directory / name).is_file():
            raise PipelineError(f"model bundle {directory} is missing {name} ({key})")
    config = PipelineConfig.load(directory / files["config"])
    if expect_config is not None and expect_config.dsp_hash() != manifest["dsp_hash"]:
        raise PipelineError("front-end settings of the current config differ from those the bundle "
                            "was trained with; retrain or use the bundle's config.json")
    with open(directory / files["scaler"]) as fh:
        scaler = Scaler.from_dict(json.load(fh))
    g = manifest["gating"]
    gating = GatingModel(GmmModel.load(directory / files["gmm_vowel"]),
                         GmmModel.load(directory / files["gmm_nonvowel"]),
                         g["prior_vowel"], g["prior_nonvowel"], g["epsilon"])
    svm = SvmModel.load(directory / files["svm"])
    vowel_models = {c: GmmModel.load(directory / name) for c, name in manifest["vowel_models"].items()}
    refiner = None
    if manifest.get("pairwise"):
        refiner = PairwiseRefiner({tuple(k.split("|")): SvmModel.load(directory / v)
                                   for k, v in manifest["pairwise"].items()})
    report = TrainReport()
    if (directory / files["report"]).is_file():
        with open(directory / files["report"]) as fh:
            report = TrainReport(**json.load(fh))
    return ModelBundle(config, scaler, gating, svm, vowel_models, refiner, report)


def segment_times(start, stop, config: PipelineConfig):
    return float(frame_edge_time(start, config.dsp)), float(frame_edge_time(stop, config.dsp))
