"""Synthetic formant-vowel corpus, labelled WAV ingestion and splitting.

Vowels come from a source-filter synthesiser: an impulse train at the
pitch frequency drives three cascaded second-order resonators. Diphthongs
glide linearly between the formants of their endpoint vowels. Utterances
alternate non-vowel fillers (silence, broadband noise bursts, high-band
fricative-like noise) with vowels, so every label is exact by construction.

Label files hold one interval per line, ``start_s<TAB>end_s<TAB>label``;
blank lines and ``#`` comments are ignored.
"""
from __future__ import annotations

import os
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.signal import butter, lfilter, lfiltic, sosfilt

from .dsp import SAMPLE_RATE, AudioBuffer, DspConfig, frame_center_time, n_frames, read_wav, write_wav
from .recognizer import VOWELS, is_vowel, normalize_label

BANDWIDTHS = (60.0, 90.0, 120.0)

FORMANTS = {
    "a": (700.0, 1200.0, 2500.0),
    "@": (650.0, 1000.0, 2400.0),
    "o": (500.0, 900.0, 2400.0),
    "e": (500.0, 1800.0, 2500.0),
    "i": (300.0, 2300.0, 3000.0),
    "u": (350.0, 800.0, 2300.0),
}
GLIDES = {"au": ("a", "u"), "ei": ("e", "i")}
FILLERS = ("sil", "noise", "fric")


class CorpusError(ValueError):
    pass


@dataclass(frozen=True)
class SynthSpec:
    vowel: str
    formants: tuple
    pitch: float = 120.0
    duration: float = 0.15
    noise_snr: float = 30.0
    formants_end: tuple | None = None  # glide target, diphthongs only
    level: float = 0.1  # output RMS before noise

    def validate(self, sample_rate: int = SAMPLE_RATE) -> None:
        nyquist = sample_rate / 2.0
        for f in (self.formants, self.formants_end):
            if f is None:
                continue
            if len(f) != 3:
                raise CorpusError("exactly three formants are required")
            if any(v >= nyquist for v in f):
                raise CorpusError(f"formants {f} must stay below Nyquist ({nyquist:g} Hz)")
            if not (0 < f[0] < f[1] < f[2]):
                raise CorpusError(f"formants {f} must be positive and strictly increasing")
        if not self.duration > 0:
            raise CorpusError("duration must be positive")
        if not 0 < self.pitch < nyquist:
            raise CorpusError("pitch must lie in (0, Nyquist)")


def default_spec(vowel: str, **kw) -> SynthSpec:
    if vowel in GLIDES:
        a, b = GLIDES[vowel]
        return SynthSpec(vowel, FORMANTS[a], formants_end=FORMANTS[b], **kw)
    return SynthSpec(vowel, FORMANTS[vowel], **kw)


def _resonator_coeffs(freq, bw, sample_rate):
    T = 1.0 / sample_rate
    c = -np.exp(-2.0 * np.pi * bw * T)
    b = 2.0 * np.exp(-np.pi * bw * T) * np.cos(2.0 * np.pi * freq * T)
    return 1.0 - b - c, b, c


def _resonate(x, freqs, bw, sample_rate, block=8):
    """Second-order resonator with a per-sample centre-frequency track.

    Coefficients are updated every ``block`` samples; the filter memory is
    carried as past outputs so coefficient changes stay continuous.
    """
    freqs = np.broadcast_to(np.asarray(freqs, dtype=np.float64), x.shape)
    if np.all(freqs == freqs[0]):
        a, b, c = _resonator_coeffs(freqs[0], bw, sample_rate)
        return lfilter([a], [1.0, -b, -c], x)
    y = np.empty_like(x)
    past = [0.0, 0.0]
    for start in range(0, len(x), block):
        stop = min(start + block, len(x))
        f = float(np.mean(freqs[start:stop]))
        a, b, c = _resonator_coeffs(f, bw, sample_rate)
        zi = lfiltic([a], [1.0, -b, -c], past)
        y[start:stop], _ = lfilter([a], [1.0, -b, -c], x[start:stop], zi=zi)
        seg = y[max(start, stop - 2):stop][::-1].tolist()
        past = (seg + past)[:2]
    return y


def _impulse_train(n, pitch, sample_rate, rng):
    x = np.zeros(n)
    period = sample_rate / pitch
    t = rng.uniform(0.0, period)
    while t < n:
        x[int(t)] = 1.0
        t += period
    return x


def _ramp(n, sample_rate, ms=5.0):
    r = min(int(sample_rate * ms / 1000.0), n // 2)
    env = np.ones(n)
    if r > 0:
        w = 0.5 * (1.0 - np.cos(np.pi * np.arange(r) / r))
        env[:r] = w
        env[n - r:] = w[::-1]
    return env


def _rms(x):
    return float(np.sqrt(np.mean(x * x))) if x.size else 0.0


def synthesize_vowel(spec: SynthSpec, seed: int = 0, sample_rate: int = SAMPLE_RATE) -> AudioBuffer:
    spec.validate(sample_rate)
    rng = np.random.default_rng(seed)
    n = int(round(spec.duration * sample_rate))
    if n < 1:
        raise CorpusError("duration is shorter than one sample")
    x = _impulse_train(n, spec.pitch, sample_rate, rng)
    ramp = np.linspace(0.0, 1.0, n)
    end = spec.formants_end or spec.formants
    for k in range(3):
        track = spec.formants[k] + (end[k] - spec.formants[k]) * ramp
        x = _resonate(x, track, BANDWIDTHS[k], sample_rate)
    x *= _ramp(n, sample_rate)
    x *= spec.level / max(_rms(x), 1e-12)
    noise = rng.standard_normal(n) * spec.level * 10.0 ** (-spec.noise_snr / 20.0)
    return AudioBuffer(x + noise, sample_rate)


@dataclass
class LabeledUtterance:
    audio: AudioBuffer
    labels: list  # (start_s, end_s, label)
    name: str = ""

    def __post_init__(self):
        validate_labels(self.labels, self.audio.duration)

    def vowel_intervals(self):
        return [(a, b, normalize_label(lab)) for a, b, lab in self.labels if is_vowel(lab)]


def validate_labels(labels, duration: float, source: str = "labels") -> None:
    slack = 1e-6
    prev = None
    for a, b, lab in labels:
        if not (0 <= a < b <= duration + slack):
            raise CorpusError(f"{source}: interval ({a}, {b}, {lab}) is empty or outside "
                              f"[0, {duration:.6f}] s")
        if prev is not None:
            if a < prev[0]:
                raise CorpusError(f"{source}: intervals not sorted: {prev} then {(a, b, lab)}")
            if a < prev[1] - slack:
                raise CorpusError(f"{source}: overlapping intervals {prev} and {(a, b, lab)}")
        prev = (a, b, lab)


@dataclass
class CorpusConfig:
    n_utterances: int = 55
    n_male: int = 30
    repetitions: int = 2
    vowels: tuple = VOWELS
    formants: dict = field(default_factory=lambda: {k: list(v) for k, v in FORMANTS.items()})
    token_jitter: float = 0.03
    male_scale: tuple = (0.96, 1.02)
    female_scale: tuple = (1.02, 1.08)
    male_pitch: tuple = (90.0, 140.0)
    female_pitch: tuple = (170.0, 240.0)
    vowel_duration: tuple = (0.10, 0.20)
    filler_duration: tuple = (0.06, 0.16)
    noise_snr: float = 30.0
    floor_db: float = -45.0
    level: float = 0.1

    def to_dict(self) -> dict:
        out = dict(self.__dict__)
        out["vowels"] = list(self.vowels)
        for k in ("male_scale", "female_scale", "male_pitch", "female_pitch",
                  "vowel_duration", "filler_duration"):
            out[k] = list(out[k])
        return out

    @classmethod
    def from_dict(cls, doc: dict) -> "CorpusConfig":
        doc = dict(doc)
        for k in ("vowels", "male_scale", "female_scale", "male_pitch", "female_pitch",
                  "vowel_duration", "filler_duration"):
            if k in doc:
                doc[k] = tuple(doc[k])
        return cls(**doc)


def _filler(kind, n, level, sample_rate, rng):
    if kind == "sil":
        return np.zeros(n)
    x = rng.standard_normal(n)
    if kind == "fric":
        sos = butter(6, [2800.0, 3900.0], btype="bandpass", fs=sample_rate, output="sos")
        x = sosfilt(sos, x)
    x *= level * rng.uniform(0.3, 1.0) / max(_rms(x), 1e-12)
    return x * _ramp(n, sample_rate)


def _vowel_spec(vowel, formants, scale, pitch, duration, config, rng):
    def jitter(f):
        return tuple(float(v) * scale * (1.0 + rng.uniform(-config.token_jitter, config.token_jitter))
                     for v in f)

    if vowel in GLIDES:
        a, b = GLIDES[vowel]
        start, end = jitter(formants[a]), jitter(formants[b])
    else:
        start, end = jitter(formants[vowel]), None
    return SynthSpec(vowel, start, pitch * rng.uniform(0.95, 1.05), duration,
                     config.noise_snr, end, config.level * rng.uniform(0.7, 1.3))


def generate_corpus(config: CorpusConfig | None = None, seed: int = 0,
                    sample_rate: int = SAMPLE_RATE) -> list[LabeledUtterance]:
    config = config or CorpusConfig()
    rng = np.random.default_rng(seed)
    corpus = []
    for u in range(config.n_utterances):
        male = u < config.n_male
        scale = rng.uniform(*(config.male_scale if male else config.female_scale))
        pitch = rng.uniform(*(config.male_pitch if male else config.female_pitch))
        order = [v for _ in range(config.repetitions) for v in rng.permutation(list(config.vowels))]
        pieces, labels, pos = [], [], 0

        def add_filler():
            nonlocal pos
            kind = FILLERS[rng.integers(len(FILLERS))]
            n = int(round(rng.uniform(*config.filler_duration) * sample_rate))
            pieces.append(_filler(kind, n, config.level, sample_rate, rng))
            labels.append((pos / sample_rate, (pos + n) / sample_rate, kind))
            pos += n

        add_filler()
        for vowel in order:
            dur = rng.uniform(*config.vowel_duration)
            spec = _vowel_spec(vowel, config.formants, scale, pitch, dur, config, rng)
            audio = synthesize_vowel(spec, int(rng.integers(2 ** 31)), sample_rate)
            n = len(audio)
            pieces.append(audio.samples)
            labels.append((pos / sample_rate, (pos + n) / sample_rate, vowel))
            pos += n
            add_filler()
        signal = np.concatenate(pieces)
        signal += rng.standard_normal(signal.size) * config.level * 10.0 ** (config.floor_db / 20.0)
        peak = np.max(np.abs(signal))
        if peak > 0.99:
            signal *= 0.99 / peak
        corpus.append(LabeledUtterance(AudioBuffer(signal, sample_rate), labels,
                                       f"utt{u:03d}_{'m' if male else 'f'}"))
    return corpus


def split(corpus, train_fraction: float = 0.8, seed: int = 0, max_attempts: int = 200):
    """Utterance-level split with every vowel class present on both sides."""
    if not 0 < train_fraction < 1:
        raise CorpusError("train fraction must lie in (0, 1)")
    n = len(corpus)
    if n < 2:
        raise CorpusError("need at least two utterances to split")
    n_train = min(max(int(round(train_fraction * n)), 1), n - 1)
    classes = {lab for utt in corpus for _, _, lab in utt.vowel_intervals()}
    rng = np.random.default_rng(seed)
    for _ in range(max_attempts):
        perm = rng.permutation(n)
        train = [corpus[i] for i in sorted(perm[:n_train])]
        test = [corpus[i] for i in sorted(perm[n_train:])]
        have_train = {lab for u in train for _, _, lab in u.vowel_intervals()}
        have_test = {lab for u in test for _, _, lab in u.vowel_intervals()}
        if have_train >= classes and have_test >= classes:
            return train, test
    missing = sorted(classes - have_train) + sorted(classes - have_test)
    raise CorpusError(f"could not stratify split; classes missing from one side: {missing}")


def frame_labels(utt: LabeledUtterance, n: int | None = None,
                 dsp_config: DspConfig = DspConfig()) -> list[str]:
    """Label of each analysis frame, taken at the frame centre; unlabelled
    regions count as non-vowel."""
    if n is None:
        n = n_frames(len(utt.audio), dsp_config.frame_length, dsp_config.hop)
    centers = frame_center_time(np.arange(n), dsp_config)
    out = ["nv"] * n
    for a, b, lab in utt.labels:
        idx = np.flatnonzero((centers >= a) & (centers < b))
        for k in idx:
            out[k] = normalize_label(lab)
    return out


def vowel_frame_ranges(utt: LabeledUtterance, n: int | None = None,
                       dsp_config: DspConfig = DspConfig()):
    """``(start, stop, label)`` frame ranges of each vowel interval."""
    if n is None:
        n = n_frames(len(utt.audio), dsp_config.frame_length, dsp_config.hop)
    centers = frame_center_time(np.arange(n), dsp_config)
    out = []
    for a, b, lab in utt.vowel_intervals():
        idx = np.flatnonzero((centers >= a) & (centers < b))
        if idx.size:
            out.append((int(idx[0]), int(idx[-1]) + 1, lab))
    return out


def write_labels(path, labels) -> None:
    with open(path, "w") as fh:
        fh.write("# start_s\tend_s\tlabel\n")
        for a, b, lab in labels:
            fh.write(f"{a:.6f}\t{b:.6f}\t{lab}\n")


def read_labels(path) -> list:
    labels = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            text = line.split("#", 1)[0].strip()
            if not text:
                continue
            parts = text.split("\t")
            if len(parts) != 3:
                parts = text.split()
            if len(parts) != 3:
                raise CorpusError(f"{path}:{lineno}: expected 'start<TAB>end<TAB>label', got {line.rstrip()!r}")
            try:
                a, b = float(parts[0]), float(parts[1])
            except ValueError:
                raise CorpusError(f"{path}:{lineno}: non-numeric time in {line.rstrip()!r}") from None
            labels.append((a, b, parts[2].strip()))
    return labels


def save_labeled_wav(utt: LabeledUtterance, wav_path, label_path) -> None:
    write_wav(wav_path, utt.audio)
    write_labels(label_path, utt.labels)


def load_labeled_wav(wav_path, label_path) -> LabeledUtterance:
    audio = read_wav(wav_path)
    labels = read_labels(label_path)
    validate_labels(labels, audio.duration, str(label_path))
    return LabeledUtterance(audio, labels, Path(wav_path).stem)


def write_manifest(path, entries) -> None:
    """``entries``: (wav_path, label_path) pairs, stored relative to the manifest."""
    base = Path(path).resolve().parent
    with open(path, "w") as fh:
        for wav, lab in entries:
            fh.write(f"{os.path.relpath(Path(wav).resolve(), base)}\t"
                     f"{os.path.relpath(Path(lab).resolve(), base)}\n")


def read_manifest(path) -> list[tuple[Path, Path]]:
    base = Path(path).resolve().parent
    out = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            text = line.split("#", 1)[0].strip()
            if not text:
                continue
            parts = text.split("\t")
            if len(parts) != 2:
                raise CorpusError(f"{path}:{lineno}: expected 'wav<TAB>labels'")
            out.append((base / parts[0], base / parts[1]))
    return out


def load_manifest(path) -> list[LabeledUtterance]:
    return [load_labeled_wav(w, l) for w, l in read_manifest(path)]
