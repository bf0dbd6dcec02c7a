"""Diagonal-covariance Gaussian mixtures with frame-weighted EM.

Frame weights in [0, 1] let neighbouring frames contribute partially to a
segment's density estimate (soft segment modeling); weights of exactly one
inside the segment and zero elsewhere reduce to ordinary hard-segment EM.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np
from scipy.special import expit, logsumexp

LOG_2PI = np.log(2.0 * np.pi)
WEIGHT_TINY = 1e-300


class GmmError(ValueError):
    pass


class GaussianComponent(NamedTuple):
    weight: float
    mean: np.ndarray
    variance: np.ndarray


@dataclass
class EmConfig:
    max_iter: int = 200
    tol: float = 1e-6
    var_floor: float = 1e-4
    kmeans_iter: int = 10
    seed: int = 0


@dataclass
class GmmModel:
    """Weighted mixture of diagonal Gaussians.

    Attributes
    ----------
    weights : (M,) array
    means : (M, d) array
    variances : (M, d) array
    class_label : str
    history : weighted log-likelihood after initialisation and after each
        EM iteration (empty for models not produced by :func:`em_fit`).
    """

    weights: np.ndarray
    means: np.ndarray
    variances: np.ndarray
    class_label: str = ""
    history: list = field(default_factory=list, compare=False, repr=False)

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=np.float64).reshape(-1)
        self.means = np.atleast_2d(np.asarray(self.means, dtype=np.float64))
        self.variances = np.atleast_2d(np.asarray(self.variances, dtype=np.float64))
        m = self.weights.size
        if self.means.shape[0] != m or self.variances.shape != self.means.shape:
            raise GmmError("weights, means and variances disagree on shape")
        if np.any(self.variances <= 0):
            raise GmmError("variances must be positive")
        if np.any(self.weights < 0) or abs(self.weights.sum() - 1.0) > 1e-9:
            raise GmmError("mixture weights must be non-negative and sum to 1")

    @property
    def n_components(self) -> int:
        return self.weights.size

    @property
    def dimension(self) -> int:
        return self.means.shape[1]

    @property
    def components(self) -> list[GaussianComponent]:
        return [GaussianComponent(float(w), mu, var)
                for w, mu, var in zip(self.weights, self.means, self.variances)]

    def component_log_pdf(self, x) -> np.ndarray:
        """log(c_m N(x; mu_m, var_m)) for every row of ``x``, shape (n, M)."""
        x = np.asarray(x, dtype=np.float64)
        if x.shape[-1] != self.dimension:
            raise GmmError(f"feature dimension {x.shape[-1]} != model dimension {self.dimension}")
        x2 = np.atleast_2d(x)
        inv = 1.0 / self.variances
        quad = np.empty((x2.shape[0], self.n_components))
        for m in range(self.n_components):
            diff = x2 - self.means[m]
            quad[:, m] = (diff * diff) @ inv[m]
        log_norm = -0.5 * (self.dimension * LOG_2PI + np.sum(np.log(self.variances), axis=1))
        with np.errstate(divide="ignore"):
            log_w = np.log(self.weights)
        return log_w + log_norm - 0.5 * quad

    def log_pdf(self, x):
        lp = logsumexp(self.component_log_pdf(x), axis=1)
        return float(lp[0]) if np.ndim(x) == 1 else lp

    def pdf(self, x):
        return np.exp(self.log_pdf(x))

    def to_dict(self) -> dict:
        return {
            "dimension": self.dimension,
            "class_label": self.class_label,
            "components": [
                {"weight": float(c.weight), "mean": c.mean.tolist(), "variance": c.variance.tolist()}
                for c in self.components
            ],
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "GmmModel":
        comps = doc["components"]
        model = cls([c["weight"] for c in comps], [c["mean"] for c in comps],
                    [c["variance"] for c in comps], doc.get("class_label", ""))
        if model.dimension != doc["dimension"]:
            raise GmmError("stored dimension does not match component means")
        return model

    def save(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh)

    @classmethod
    def load(cls, path) -> "GmmModel":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


def gmm_pdf(model: GmmModel, x):
    return model.pdf(x)


def log_gmm_pdf(model: GmmModel, x):
    return model.log_pdf(x)


def _kmeans_pp(x, w, k, rng):
    n = len(x)
    centers = np.empty((k, x.shape[1]))
    first = rng.choice(n, p=w / w.sum())
    centers[0] = x[first]
    d2 = np.sum((x - centers[0]) ** 2, axis=1)
    for j in range(1, k):
        score = w * d2
        total = score.sum()
        idx = rng.choice(n, p=score / total) if total > 0 else rng.choice(n, p=w / w.sum())
        centers[j] = x[idx]
        d2 = np.minimum(d2, np.sum((x - centers[j]) ** 2, axis=1))
    return centers


def _sq_dist(x, centers):
    return (np.sum(x ** 2, axis=1)[:, None] - 2.0 * x @ centers.T
            + np.sum(centers ** 2, axis=1)[None, :])


def _weighted_kmeans(x, w, k, n_iter, rng):
    centers = _kmeans_pp(x, w, k, rng)
    for _ in range(n_iter):
        assign = np.argmin(_sq_dist(x, centers), axis=1)
        for j in range(k):
            mask = assign == j
            mass = w[mask].sum()
            if mass > 0:
                centers[j] = w[mask] @ x[mask] / mass
    return centers, np.argmin(_sq_dist(x, centers), axis=1)


def _init_from_kmeans(x, w, k, config, rng):
    centers, assign = _weighted_kmeans(x, w, k, config.kmeans_iter, rng)
    total = w.sum()
    global_mean = w @ x / total
    global_var = np.maximum(w @ (x - global_mean) ** 2 / total, config.var_floor)
    weights = np.empty(k)
    variances = np.empty_like(centers)
    for j in range(k):
        mask = assign == j
        mass = w[mask].sum()
        weights[j] = max(mass, WEIGHT_TINY)
        if mass > 0:
            variances[j] = w[mask] @ (x[mask] - centers[j]) ** 2 / mass
        else:
            variances[j] = global_var
    return weights / weights.sum(), centers, np.maximum(variances, config.var_floor)


def _e_step(model: GmmModel, x, w):
    logp = model.component_log_pdf(x)
    lse = logsumexp(logp, axis=1)
    resp = np.exp(logp - lse[:, None])
    return float(w @ lse), resp


def em_fit(data, frame_weights=None, n_components: int = 1,
           config: EmConfig | None = None, class_label: str = "") -> GmmModel:
    """Fit a diagonal GMM by frame-weighted EM.

    The objective is the weighted log-likelihood ``sum_n w_n log p(x_n)``.
    Initialisation is weighted k-means++ followed by ``kmeans_iter`` Lloyd
    steps. Iteration stops when the relative improvement drops below
    ``config.tol`` or after ``config.max_iter`` iterations. Variances are
    floored at ``config.var_floor``, which keeps every M-step a constrained
    maximiser, so the objective stays non-decreasing.
    """
    config = config or EmConfig()
    x = np.atleast_2d(np.asarray(data, dtype=np.float64))
    if x.ndim != 2:
        raise GmmError("data must be a 2-D array of feature rows")
    w = np.ones(len(x)) if frame_weights is None else np.asarray(frame_weights, dtype=np.float64)
    if w.shape != (len(x),):
        raise GmmError("need exactly one weight per data row")
    if np.any(w < 0) or not np.all(np.isfinite(w)):
        raise GmmError("frame weights must be finite and non-negative")
    if not np.all(np.isfinite(x)):
        raise GmmError("data contains non-finite values")
    # zero-weight rows carry no information; dropping them keeps soft and
    # hard segmentations bit-identical
    keep = w > 0
    x, w = x[keep], w[keep]
    if n_components < 1 or len(x) < n_components:
        raise GmmError(f"{len(x)} effective rows cannot support {n_components} components")

    rng = np.random.default_rng(config.seed)
    weights, means, variances = _init_from_kmeans(x, w, n_components, config, rng)
    model = GmmModel(weights, means, variances, class_label)
    ll, resp = _e_step(model, x, w)
    history = [ll]
    for _ in range(config.max_iter):
        wr = resp * w[:, None]
        nk = wr.sum(axis=0)
        safe = np.maximum(nk, WEIGHT_TINY)
        new_means = (wr.T @ x) / safe[:, None]
        new_vars = np.empty_like(new_means)
        for m in range(n_components):
            diff = x - new_means[m]
            new_vars[m] = (wr[:, m] @ (diff * diff)) / safe[m]
        dead = nk <= 0
        new_means[dead] = model.means[dead]
        new_vars[dead] = model.variances[dead]
        new_weights = safe / safe.sum()
        model = GmmModel(new_weights, new_means, np.maximum(new_vars, config.var_floor), class_label)
        prev = ll
        ll, resp = _e_step(model, x, w)
        history.append(ll)
        if ll - prev < config.tol * abs(prev):
            break
    model.history = history
    return model


@dataclass(frozen=True)
class SoftSegmentWeights:
    frames: np.ndarray
    weights: np.ndarray

    def dense(self, n_frames: int) -> np.ndarray:
        out = np.zeros(n_frames)
        ok = (self.frames >= 0) & (self.frames < n_frames)
        out[self.frames[ok]] = self.weights[ok]
        return out


def taper(context: int) -> np.ndarray:
    """Raised-cosine weights for context frames 1..context."""
    k = np.arange(1, context + 1)
    return 0.5 * (1.0 + np.cos(np.pi * k / (context + 1)))


def soft_segment_weights(core: tuple[int, int], context: int = 0,
                         n_frames: int | None = None) -> SoftSegmentWeights:
    """Weights for a segment whose core spans frames ``[start, stop)``.

    Core frames get 1; the k-th frame outside either end gets the raised-cosine
    taper value; frames beyond the context get nothing. When ``n_frames`` is
    given, frames outside ``[0, n_frames)`` are dropped.
    """
    start, stop = core
    if stop <= start:
        raise GmmError("segment core must be non-empty")
    if context < 0:
        raise GmmError("context must be >= 0")
    t = taper(context)
    k = np.arange(1, context + 1)
    frames = np.concatenate([start - k[::-1], np.arange(start, stop), stop - 1 + k])
    weights = np.concatenate([t[::-1], np.ones(stop - start), t])
    if n_frames is not None:
        ok = (frames >= 0) & (frames < n_frames)
        frames, weights = frames[ok], weights[ok]
    return SoftSegmentWeights(frames.astype(int), weights)


def confidence_measure(vowel_model: GmmModel, nonvowel_model: GmmModel, segment) -> float:
    """Logistic of the mean per-frame vowel/non-vowel log-likelihood ratio."""
    seg = np.atleast_2d(np.asarray(segment, dtype=np.float64))
    if seg.shape[0] == 0:
        raise GmmError("confidence measure of an empty segment")
    ratio = vowel_model.log_pdf(seg) - nonvowel_model.log_pdf(seg)
    return float(expit(np.mean(ratio)))
