"""Sigmoid calibration of SVM decision values.

P(y=+1 | f) = 1 / (1 + exp(A f + B)), with (A, B) minimising the
cross-entropy against the regularised targets (N+ + 1)/(N+ + 2) and
1/(N- + 2). The fit is a damped Newton iteration written in terms of
log1p/exp branches so neither log(0) nor exp overflow is ever evaluated.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class PlattError(ValueError):
    pass


@dataclass(frozen=True)
class PlattParams:
    A: float
    B: float

    def to_dict(self):
        return {"A": self.A, "B": self.B}

    @classmethod
    def from_dict(cls, doc):
        return cls(float(doc["A"]), float(doc["B"]))


def _counts(labels):
    y = np.asarray(labels)
    if not np.all((y == 1) | (y == -1)):
        raise PlattError("labels must be +1 or -1")
    return int(np.sum(y == 1)), int(np.sum(y == -1))


def platt_targets(labels, n_plus: int | None = None, n_minus: int | None = None) -> np.ndarray:
    y = np.asarray(labels)
    counted = _counts(y)
    n_plus = counted[0] if n_plus is None else n_plus
    n_minus = counted[1] if n_minus is None else n_minus
    if (n_plus, n_minus) != counted:
        raise PlattError(f"class counts {(n_plus, n_minus)} do not match labels {counted}")
    if n_plus < 1 or n_minus < 1:
        raise PlattError("need at least one example of each class")
    hi = (n_plus + 1.0) / (n_plus + 2.0)
    lo = 1.0 / (n_minus + 2.0)
    return np.where(y == 1, hi, lo)


def _log1pexp(z):
    """log(1 + exp(z)) without overflow."""
    return np.where(z > 0, z + np.log1p(np.exp(-np.abs(z))), np.log1p(np.exp(-np.abs(z))))


def objective(A: float, B: float, f_values, targets) -> float:
    """Cross-entropy sum_i -(t log p + (1-t) log(1-p)) at p = sigmoid(-(A f + B))."""
    z = A * np.asarray(f_values, dtype=np.float64) + B
    t = np.asarray(targets, dtype=np.float64)
    # -log p = log(1+e^z), -log(1-p) = log(1+e^-z)
    return float(np.sum(t * _log1pexp(z) + (1.0 - t) * _log1pexp(-z)))


def posterior(params: PlattParams, f):
    """1 / (1 + exp(A f + B)) evaluated in the overflow-safe branch form."""
    z = params.A * np.asarray(f, dtype=np.float64) + params.B
    with np.errstate(over="ignore"):
        ez = np.exp(-np.abs(z))
        p = np.where(z >= 0, ez / (1.0 + ez), 1.0 / (1.0 + ez))
    return float(p) if np.ndim(p) == 0 else p


def gradient(A: float, B: float, f_values, targets) -> np.ndarray:
    f = np.asarray(f_values, dtype=np.float64)
    p = posterior(PlattParams(A, B), f)
    d = np.asarray(targets) - p
    return np.array([f @ d, d.sum()])


def fit_sigmoid(f_values, labels, max_iter: int = 100, grad_tol: float = 1e-8,
                min_step: float = 1e-10, sigma: float = 1e-12) -> PlattParams:
    f = np.asarray(f_values, dtype=np.float64)
    if f.ndim != 1 or f.size != np.size(labels):
        raise PlattError("need one decision value per label")
    if not np.all(np.isfinite(f)):
        raise PlattError("decision values must be finite")
    n_plus, n_minus = _counts(labels)
    t = platt_targets(labels, n_plus, n_minus)

    A, B = 0.0, float(np.log((n_minus + 1.0) / (n_plus + 1.0)))
    fval = objective(A, B, f, t)
    for _ in range(max_iter):
        p = posterior(PlattParams(A, B), f)
        d2 = p * (1.0 - p)
        h11 = sigma + f * f @ d2
        h22 = sigma + d2.sum()
        h21 = f @ d2
        d1 = t - p
        g1, g2 = f @ d1, d1.sum()
        if max(abs(g1), abs(g2)) < grad_tol:
            break
        det = h11 * h22 - h21 * h21
        dA = -(h22 * g1 - h21 * g2) / det
        dB = -(-h21 * g1 + h11 * g2) / det
        gd = g1 * dA + g2 * dB
        gnorm = max(abs(g1), abs(g2))
        flat = 8.0 * np.finfo(float).eps * max(1.0, abs(fval))
        step = 1.0
        while step >= min_step:
            nA, nB = A + step * dA, B + step * dB
            nval = objective(nA, nB, f, t)
            if nval < fval + 1e-4 * step * gd:
                A, B, fval = nA, nB, nval
                break
            # objective flat to rounding: accept only if the gradient shrinks
            if abs(nval - fval) <= flat and np.max(np.abs(gradient(nA, nB, f, t))) < gnorm:
                A, B, fval = nA, nB, min(nval, fval)
                break
            step /= 2.0
        else:
            # line search exhausted: at numerical optimum
            break
    return PlattParams(float(A), float(B))
