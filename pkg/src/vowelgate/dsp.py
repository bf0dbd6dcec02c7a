"""Acoustic front-end: pre-emphasis, framing, MFCC, deltas and band-pass energy.

Analysis defaults are 8 kHz audio, a ``1 - 0.98 z^-1`` pre-emphasis filter,
200-sample Hamming windows and a 100-sample hop. Each frame yields a
25-dimensional classifier vector (12 MFCC, 12 delta MFCC, delta log-energy)
plus a band-pass energy scalar in [0, 1].
"""
from __future__ import annotations

import csv
import wave
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from scipy.fft import dct

SAMPLE_RATE = 8000
PRE_EMPHASIS = 0.98
FRAME_LENGTH = 200
HOP = 100
N_FFT = 256
N_MEL = 23
N_CEPS = 12
DELTA_SPAN = 2
LOG_FLOOR = 1e-10
ENERGY_FLOOR = 1e-12
BAND = (300.0, 2500.0)
FEATURE_DIM = 2 * N_CEPS + 1


class DspError(ValueError):
    pass


@dataclass(frozen=True)
class DspConfig:
    sample_rate: int = SAMPLE_RATE
    pre_emphasis: float = PRE_EMPHASIS
    frame_length: int = FRAME_LENGTH
    hop: int = HOP
    n_fft: int = N_FFT
    n_mel: int = N_MEL
    n_ceps: int = N_CEPS
    delta_span: int = DELTA_SPAN
    band_low: float = BAND[0]
    band_high: float = BAND[1]

    def validate(self) -> None:
        if self.sample_rate <= 0:
            raise DspError("sample_rate must be positive")
        if not 0.0 <= self.pre_emphasis < 1.0:
            raise DspError("pre_emphasis must lie in [0, 1)")
        if self.frame_length < 2 or self.hop < 1:
            raise DspError("frame_length must be >= 2 and hop >= 1")
        if self.n_fft < self.frame_length:
            raise DspError("n_fft must be at least frame_length")
        if not 0 < self.n_ceps < self.n_mel:
            raise DspError("need 0 < n_ceps < n_mel")
        if self.delta_span < 1:
            raise DspError("delta_span must be >= 1")
        if not 0.0 <= self.band_low < self.band_high <= self.sample_rate / 2:
            raise DspError("band edges must satisfy 0 <= low < high <= Nyquist")

    @property
    def feature_dim(self) -> int:
        return 2 * self.n_ceps + 1


@dataclass(frozen=True)
class AudioBuffer:
    samples: np.ndarray
    sample_rate: int = SAMPLE_RATE

    def __post_init__(self):
        samples = np.asarray(self.samples, dtype=np.float64)
        if samples.ndim != 1:
            raise DspError("audio must be one-dimensional")
        if self.sample_rate <= 0:
            raise DspError("sample_rate must be positive")
        if not np.all(np.isfinite(samples)):
            raise DspError("audio contains non-finite samples")
        object.__setattr__(self, "samples", samples)

    def __len__(self):
        return len(self.samples)

    @property
    def duration(self) -> float:
        return len(self.samples) / self.sample_rate


class FeatureVector(NamedTuple):
    mfcc: np.ndarray
    delta_mfcc: np.ndarray
    delta_log_energy: float
    bandpass_energy: float
    frame_index: int

    @property
    def vector(self) -> np.ndarray:
        return np.concatenate([self.mfcc, self.delta_mfcc, [self.delta_log_energy]])


@dataclass(frozen=True)
class Features:
    """Per-frame features of one utterance.

    ``matrix`` has one 25-dimensional row per frame (MFCC, delta MFCC, delta
    log-energy); ``bandpass`` holds the band-pass energy of each frame.
    """

    matrix: np.ndarray
    bandpass: np.ndarray
    n_ceps: int = N_CEPS

    def __len__(self):
        return self.matrix.shape[0]

    def frame(self, k: int) -> FeatureVector:
        row = self.matrix[k]
        c = self.n_ceps
        return FeatureVector(row[:c], row[c:2 * c], float(row[2 * c]),
                             float(self.bandpass[k]), k)


def _as_array(signal) -> np.ndarray:
    if isinstance(signal, AudioBuffer):
        return signal.samples
    return np.asarray(signal, dtype=np.float64)


def pre_emphasize(signal, coefficient: float = PRE_EMPHASIS) -> np.ndarray:
    x = _as_array(signal)
    if x.size == 0:
        raise DspError("cannot pre-emphasize an empty signal")
    y = x.copy()
    y[1:] -= coefficient * x[:-1]
    return y


def de_emphasize(signal, coefficient: float = PRE_EMPHASIS) -> np.ndarray:
    """Exact inverse of :func:`pre_emphasize` (one-pole recurrence)."""
    from scipy.signal import lfilter

    y = _as_array(signal)
    return lfilter([1.0], [1.0, -coefficient], y)


def hamming(length: int) -> np.ndarray:
    n = np.arange(length)
    return 0.54 - 0.46 * np.cos(2.0 * np.pi * n / (length - 1))


def n_frames(n_samples: int, frame_length: int = FRAME_LENGTH, hop: int = HOP) -> int:
    if n_samples < frame_length:
        return 0
    return (n_samples - frame_length) // hop + 1


def frame_and_window(signal, frame_length: int = FRAME_LENGTH, hop: int = HOP) -> np.ndarray:
    """Slice into overlapping frames and apply a Hamming window.

    Returns an array of shape ``(n_frames, frame_length)``; frame ``k``
    starts at sample ``k * hop``.
    """
    x = _as_array(signal)
    count = n_frames(x.size, frame_length, hop)
    if count == 0:
        raise DspError(f"signal of {x.size} samples is shorter than one "
                       f"{frame_length}-sample frame")
    idx = np.arange(frame_length)[None, :] + hop * np.arange(count)[:, None]
    return x[idx] * hamming(frame_length)


def power_spectrum(frames: np.ndarray, n_fft: int = N_FFT) -> np.ndarray:
    spec = np.fft.rfft(np.atleast_2d(frames), n=n_fft, axis=-1)
    return spec.real ** 2 + spec.imag ** 2


def hz_to_mel(f):
    return 2595.0 * np.log10(1.0 + np.asarray(f, dtype=np.float64) / 700.0)


def mel_to_hz(m):
    return 700.0 * (10.0 ** (np.asarray(m, dtype=np.float64) / 2595.0) - 1.0)


def mel_filterbank(n_mel: int = N_MEL, n_fft: int = N_FFT,
                   sample_rate: int = SAMPLE_RATE, f_low: float = 0.0,
                   f_high: float | None = None) -> np.ndarray:
    """Triangular mel filters evaluated at the rfft bin frequencies.

    Filters are defined on continuous frequency rather than snapped to bins,
    so the narrow low-frequency filters stay non-degenerate at 256 points.
    Shape is ``(n_mel, n_fft // 2 + 1)``.
    """
    if f_high is None:
        f_high = sample_rate / 2.0
    edges = mel_to_hz(np.linspace(hz_to_mel(f_low), hz_to_mel(f_high), n_mel + 2))
    freqs = np.arange(n_fft // 2 + 1) * sample_rate / n_fft
    lo, mid, hi = edges[:-2, None], edges[1:-1, None], edges[2:, None]
    rising = (freqs - lo) / (mid - lo)
    falling = (hi - freqs) / (hi - mid)
    return np.clip(np.minimum(rising, falling), 0.0, None)


def filterbank_energies(frames: np.ndarray, config: DspConfig = DspConfig()) -> np.ndarray:
    fb = mel_filterbank(config.n_mel, config.n_fft, config.sample_rate)
    return power_spectrum(frames, config.n_fft) @ fb.T


def mfcc_features(frames: np.ndarray, config: DspConfig = DspConfig()) -> np.ndarray:
    """MFCC c1..c12 plus log-energy for each windowed frame.

    Returns shape ``(n_frames, n_ceps + 1)``; the last column is the
    log-energy of the windowed frame.
    """
    frames = np.atleast_2d(frames)
    mel = filterbank_energies(frames, config)
    logmel = np.log(np.maximum(mel, LOG_FLOOR))
    ceps = dct(logmel, type=2, norm="ortho", axis=-1)[:, 1:config.n_ceps + 1]
    log_energy = np.log(np.maximum(np.sum(frames ** 2, axis=-1), LOG_FLOOR))
    return np.column_stack([ceps, log_energy])


def delta_features(series, span: int = DELTA_SPAN) -> np.ndarray:
    """Regression deltas with edge frames repeated.

    delta[t] = sum_k k * (x[t+k] - x[t-k]) / (2 * sum_k k^2)
    """
    x = np.asarray(series, dtype=np.float64)
    squeeze = x.ndim == 1
    x = x.reshape(len(x), -1)
    if len(x) == 0:
        raise DspError("delta of an empty series")
    if span < 1:
        raise DspError("span must be >= 1")
    padded = np.pad(x, ((span, span), (0, 0)), mode="edge")
    n = len(x)
    out = np.zeros_like(x)
    for k in range(1, span + 1):
        out += k * (padded[span + k:span + k + n] - padded[span - k:span - k + n])
    out /= 2.0 * sum(k * k for k in range(1, span + 1))
    return out[:, 0] if squeeze else out


def band_pass_energy(frames, config: DspConfig = DspConfig()) -> np.ndarray | float:
    """Fraction of spectral energy inside the vowel band.

    Accepts one windowed frame (returns a float) or a 2-D stack of frames.
    """
    arr = np.asarray(frames, dtype=np.float64)
    power = power_spectrum(arr, config.n_fft)
    freqs = np.arange(power.shape[-1]) * config.sample_rate / config.n_fft
    in_band = (freqs >= config.band_low) & (freqs <= config.band_high)
    g = power[:, in_band].sum(axis=-1) / (power.sum(axis=-1) + ENERGY_FLOOR)
    g = np.clip(g, 0.0, 1.0)
    return float(g[0]) if arr.ndim == 1 else g


def extract_features(audio, config: DspConfig = DspConfig()) -> Features:
    """Full front-end: audio -> per-frame 25-d features and band-pass energy."""
    if isinstance(audio, AudioBuffer) and audio.sample_rate != config.sample_rate:
        raise DspError(f"expected {config.sample_rate} Hz audio, got {audio.sample_rate} Hz")
    x = pre_emphasize(audio, config.pre_emphasis)
    frames = frame_and_window(x, config.frame_length, config.hop)
    static = mfcc_features(frames, config)
    ceps, log_energy = static[:, :-1], static[:, -1]
    matrix = np.column_stack([
        ceps,
        delta_features(ceps, config.delta_span),
        delta_features(log_energy, config.delta_span),
    ])
    return Features(matrix, band_pass_energy(frames, config), config.n_ceps)


def frame_center_time(k, config: DspConfig = DspConfig()):
    return (np.asarray(k) * config.hop + config.frame_length / 2.0) / config.sample_rate


def frame_edge_time(k, config: DspConfig = DspConfig()):
    """Time of the boundary before frame ``k`` (midway between frame centres)."""
    return (np.asarray(k) * config.hop + (config.frame_length - config.hop) / 2.0) / config.sample_rate


def read_wav(path, sample_rate: int = SAMPLE_RATE) -> AudioBuffer:
    """Read 16-bit mono PCM WAV; anything else is rejected."""
    try:
        with wave.open(str(path), "rb") as w:
            channels = w.getnchannels()
            width = w.getsampwidth()
            rate = w.getframerate()
            comptype = w.getcomptype()
            raw = w.readframes(w.getnframes())
    except wave.Error as exc:
        raise DspError(f"{path}: not a PCM WAV file ({exc})") from exc
    if comptype != "NONE":
        raise DspError(f"{path}: compression type {comptype!r}, expected uncompressed PCM")
    if channels != 1:
        raise DspError(f"{path}: channels={channels}, expected 1 (mono)")
    if width != 2:
        raise DspError(f"{path}: sample width={8 * width} bits, expected 16")
    if rate != sample_rate:
        raise DspError(f"{path}: sample rate={rate} Hz, expected {sample_rate} Hz")
    pcm = np.frombuffer(raw, dtype="<i2").astype(np.float64)
    return AudioBuffer(pcm / 32768.0, rate)


def write_wav(path, audio: AudioBuffer) -> None:
    pcm = np.clip(np.round(audio.samples * 32768.0), -32768, 32767).astype("<i2")
    with wave.open(str(path), "wb") as w:
        w.setnchannels(1)
        w.setsampwidth(2)
        w.setframerate(audio.sample_rate)
        w.writeframes(pcm.tobytes())


def write_feature_csv(path, features: Features) -> None:
    c = features.n_ceps
    header = (["frame_index"] + [f"mfcc{i}" for i in range(1, c + 1)]
              + [f"d_mfcc{i}" for i in range(1, c + 1)] + ["d_log_energy", "G"])
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for k in range(len(features)):
            writer.writerow([k] + [repr(float(v)) for v in features.matrix[k]]
                            + [repr(float(features.bandpass[k]))])
