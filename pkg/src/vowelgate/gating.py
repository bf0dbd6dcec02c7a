"""GMM likelihood-ratio gating of frames ahead of the SVM.

The score is ``l(x) = log p(x | vowel) - log p(x | non-vowel)`` and the
Bayes threshold is ``tau = log(P_nonvowel / P_vowel)``. A frame is accepted
as a vowel when ``l > tau + eps``, as a non-vowel when ``l < tau - eps``, and
is otherwise ambiguous and routed to the SVM. Only ambiguous frames are used
to train the SVM, which keeps its support-vector count down.

Note the orientation: a larger ``l`` means more vowel-like, so the vowel
decision is on the upper side of the band.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

from .gmm import GmmModel


class GatingError(ValueError):
    pass


class Decision(enum.IntEnum):
    ACCEPT_NONVOWEL = -1
    AMBIGUOUS = 0
    ACCEPT_VOWEL = 1


@dataclass(frozen=True)
class GateDecision:
    decision: Decision
    score: float


@dataclass(frozen=True)
class GatingModel:
    gmm_vowel: GmmModel
    gmm_nonvowel: GmmModel
    prior_vowel: float = 0.5
    prior_nonvowel: float = 0.5
    epsilon: float = 0.0

    def __post_init__(self):
        p1, p2 = self.prior_vowel, self.prior_nonvowel
        if not (0 < p1 < 1 and 0 < p2 < 1) or abs(p1 + p2 - 1.0) > 1e-12:
            raise GatingError(f"priors must lie in (0, 1) and sum to 1, got {p1}, {p2}")
        if not self.epsilon >= 0:
            raise GatingError("epsilon must be >= 0")
        if self.gmm_vowel.dimension != self.gmm_nonvowel.dimension:
            raise GatingError("vowel and non-vowel mixtures differ in dimension")

    @classmethod
    def from_unnormalized(cls, gmm_vowel, gmm_nonvowel, p1, p2, epsilon=0.0):
        total = p1 + p2
        return cls(gmm_vowel, gmm_nonvowel, p1 / total, p2 / total, epsilon)

    @property
    def tau(self) -> float:
        return math.log(self.prior_nonvowel / self.prior_vowel)

    def with_epsilon(self, epsilon: float) -> "GatingModel":
        return GatingModel(self.gmm_vowel, self.gmm_nonvowel,
                           self.prior_vowel, self.prior_nonvowel, epsilon)


def gmm_score(model: GatingModel, x):
    return model.gmm_vowel.log_pdf(x) - model.gmm_nonvowel.log_pdf(x)


def decide(score, tau: float, epsilon: float):
    """Vectorised routing rule on precomputed scores."""
    s = np.asarray(score, dtype=np.float64)
    out = np.where(s > tau + epsilon, Decision.ACCEPT_VOWEL,
                   np.where(s < tau - epsilon, Decision.ACCEPT_NONVOWEL, Decision.AMBIGUOUS))
    return out.astype(int)


def gate(model: GatingModel, x) -> GateDecision:
    score = float(gmm_score(model, np.asarray(x, dtype=np.float64)))
    return GateDecision(Decision(int(decide(score, model.tau, model.epsilon))), score)


def gate_many(model: GatingModel, rows):
    scores = gmm_score(model, np.atleast_2d(rows))
    return decide(scores, model.tau, model.epsilon), scores


def select_svm_training_set(model: GatingModel, rows, labels, scores=None):
    """Keep only the frames the gate routes to the SVM.

    Returns ``(rows, labels, mask)``. ``scores`` may be passed to reuse
    already-computed likelihood ratios.
    """
    x = np.atleast_2d(np.asarray(rows, dtype=np.float64))
    y = np.asarray(labels)
    if scores is None:
        scores = gmm_score(model, x)
    mask = decide(scores, model.tau, model.epsilon) == Decision.AMBIGUOUS
    if not mask.any():
        raise GatingError(f"no frames fall inside the ambiguity band for epsilon={model.epsilon:g}; "
                          "use a larger epsilon")
    return x[mask], y[mask], mask


def calibrate_epsilon(model: GatingModel, rows=None, labels=None,
                      target_fraction: float = 0.25, tol: float = 1e-4, scores=None) -> float:
    """Smallest epsilon (to ``tol``) whose ambiguous fraction reaches the target.

    Bisection on ``[0, max |l - tau|]``; the returned value is the upper end
    of the final bracket, so the target is always met.
    """
    if scores is None:
        if rows is None:
            raise GatingError("need validation rows or precomputed scores")
        scores = gmm_score(model, np.atleast_2d(rows))
    dist = np.abs(np.asarray(scores, dtype=np.float64) - model.tau)
    if dist.size == 0:
        raise GatingError("validation set is empty")
    if not 0 < target_fraction <= 1:
        raise GatingError(f"target fraction {target_fraction} is unreachable; it must lie in (0, 1]")

    def fraction(eps):
        return np.count_nonzero(dist <= eps) / dist.size

    lo, hi = 0.0, float(dist.max())
    if fraction(lo) >= target_fraction:
        return 0.0
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if fraction(mid) >= target_fraction:
            hi = mid
        else:
            lo = mid
    return hi


def write_gating_report(path, scores, tau: float, epsilon: float) -> None:
    decisions = decide(scores, tau, epsilon)
    names = {d.value: d.name for d in Decision}
    with open(path, "w") as fh:
        fh.write("frame_index,l,tau,decision\n")
        for k, (s, d) in enumerate(zip(scores, decisions)):
            fh.write(f"{k},{float(s)!r},{tau!r},{names[int(d)]}\n")
