"""Binary soft-margin SVM with an RBF kernel, trained by SMO.

The dual problem

    min  1/2 a^T Q a - e^T a   s.t.  0 <= a_i <= C,  y^T a = 0,
    Q_ij = y_i y_j K(x_i, x_j)

is solved by sequential minimal optimisation with maximal-violating-pair
working-set selection and a fully cached kernel matrix. The primal weight
vector is never formed; predictions use the dual expansion.
"""
from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field

import numpy as np

from .platt import PlattParams, fit_sigmoid, posterior

log = logging.getLogger(__name__)


class SvmError(ValueError):
    pass


@dataclass(frozen=True)
class KernelParams:
    sigma: float = 1.0
    kind: str = "rbf"

    def __post_init__(self):
        if not self.sigma > 0:
            raise SvmError("kernel sigma must be positive")
        if self.kind != "rbf":
            raise SvmError(f"unsupported kernel {self.kind!r}; only 'rbf' is implemented")


def rbf_kernel(x, y, sigma: float) -> float:
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape:
        raise SvmError(f"dimension mismatch {x.shape} vs {y.shape}")
    if not sigma > 0:
        raise SvmError("sigma must be positive")
    d = x - y
    return float(np.exp(-(d @ d) / (2.0 * sigma * sigma)))


def sq_distances(a, b) -> np.ndarray:
    a = np.atleast_2d(a)
    b = np.atleast_2d(b)
    d = np.sum(a * a, axis=1)[:, None] - 2.0 * a @ b.T + np.sum(b * b, axis=1)[None, :]
    return np.maximum(d, 0.0)


def rbf_matrix(a, b, sigma: float) -> np.ndarray:
    return np.exp(-sq_distances(a, b) / (2.0 * sigma * sigma))


@dataclass
class SvmModel:
    support_vectors: np.ndarray
    coefficients: np.ndarray
    bias: float
    C: float
    kernel: KernelParams
    scaler_mean: np.ndarray | None = None
    scaler_std: np.ndarray | None = None
    platt: PlattParams | None = None
    n_iter: int = field(default=0, compare=False)

    def __post_init__(self):
        self.support_vectors = np.atleast_2d(np.asarray(self.support_vectors, dtype=np.float64))
        self.coefficients = np.asarray(self.coefficients, dtype=np.float64).reshape(-1)
        if len(self.coefficients) != len(self.support_vectors):
            raise SvmError("one coefficient per support vector required")
        if not self.C > 0:
            raise SvmError("C must be positive")
        if self.scaler_mean is not None:
            self.scaler_mean = np.asarray(self.scaler_mean, dtype=np.float64)
            self.scaler_std = np.asarray(self.scaler_std, dtype=np.float64)

    @property
    def n_support(self) -> int:
        return len(self.coefficients)

    @property
    def dimension(self) -> int:
        return self.support_vectors.shape[1]

    @property
    def alphas(self) -> np.ndarray:
        return np.abs(self.coefficients)

    def scale(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        if x.shape[-1] != self.dimension:
            raise SvmError(f"feature dimension {x.shape[-1]} != model dimension {self.dimension}")
        if self.scaler_mean is None:
            return x
        return (x - self.scaler_mean) / self.scaler_std

    def decision_value(self, x):
        xs = self.scale(x)
        k = rbf_matrix(np.atleast_2d(xs), self.support_vectors, self.kernel.sigma)
        f = k @ self.coefficients + self.bias
        return float(f[0]) if np.ndim(x) == 1 else f

    def probability(self, x):
        if self.platt is None:
            raise SvmError("model has no sigmoid calibration")
        return posterior(self.platt, self.decision_value(x))

    def to_dict(self) -> dict:
        doc = {
            "C": self.C,
            "sigma": self.kernel.sigma,
            "bias": self.bias,
            "scaler": None if self.scaler_mean is None else {
                "mean": self.scaler_mean.tolist(), "std": self.scaler_std.tolist()},
            "support_vectors": self.support_vectors.tolist(),
            "coefficients": self.coefficients.tolist(),
        }
        if self.platt is not None:
            doc["platt"] = self.platt.to_dict()
        return doc

    @classmethod
    def from_dict(cls, doc: dict) -> "SvmModel":
        scaler = doc.get("scaler") or {}
        platt = doc.get("platt")
        return cls(doc["support_vectors"], doc["coefficients"], float(doc["bias"]),
                   float(doc["C"]), KernelParams(float(doc["sigma"])),
                   scaler.get("mean"), scaler.get("std"),
                   PlattParams.from_dict(platt) if platt else None)

    def save(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh)

    @classmethod
    def load(cls, path) -> "SvmModel":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


def decision_value(model: SvmModel, x):
    return model.decision_value(x)


def dual_objective(alpha, labels, kernel_matrix) -> float:
    """Dual objective to maximise: sum(a) - 1/2 (a y)^T K (a y)."""
    ay = np.asarray(alpha) * np.asarray(labels)
    return float(np.sum(alpha) - 0.5 * ay @ kernel_matrix @ ay)


def _check_labels(labels) -> np.ndarray:
    y = np.asarray(labels, dtype=np.float64).reshape(-1)
    if not np.all((y == 1) | (y == -1)):
        raise SvmError("labels must be +1 or -1")
    if not (np.any(y == 1) and np.any(y == -1)):
        raise SvmError("training set must contain both classes")
    return y


def smo_solve(kernel_matrix, labels, C: float, tol: float = 1e-3,
              max_iter: int | None = None):
    """Solve the dual QP on a precomputed kernel matrix.

    Returns ``(alpha, bias, n_iter)``. Stops once the maximal KKT violation
    ``m(a) - M(a)`` falls below ``tol``.
    """
    K = np.asarray(kernel_matrix, dtype=np.float64)
    y = _check_labels(labels)
    n = len(y)
    if K.shape != (n, n):
        raise SvmError("kernel matrix shape does not match labels")
    if not C > 0:
        raise SvmError("C must be positive")
    max_iter = max_iter or max(100_000, 100 * n)
    alpha = np.zeros(n)
    grad = -np.ones(n)  # Q a - e
    pos = y > 0
    diag = np.diag(K)
    it = 0
    while it < max_iter:
        score = -y * grad
        up = (pos & (alpha < C)) | (~pos & (alpha > 0))
        low = (pos & (alpha > 0)) | (~pos & (alpha < C))
        i = int(np.argmax(np.where(up, score, -np.inf)))
        j = int(np.argmin(np.where(low, score, np.inf)))
        if score[i] - score[j] < tol:
            break
        it += 1
        eta = max(diag[i] + diag[j] - 2.0 * K[i, j], 1e-12)
        # move a_i by y_i t and a_j by -y_j t
        t = (score[i] - score[j]) / eta
        cap_i = C - alpha[i] if y[i] > 0 else alpha[i]
        cap_j = alpha[j] if y[j] > 0 else C - alpha[j]
        t = min(t, cap_i, cap_j)
        new_i = alpha[i] + y[i] * t
        new_j = alpha[j] - y[j] * t
        if t == cap_i:
            new_i = C if y[i] > 0 else 0.0
        if t == cap_j:
            new_j = 0.0 if y[j] > 0 else C
        alpha[i], alpha[j] = new_i, new_j
        grad += y * (K[:, i] - K[:, j]) * t
    else:
        log.warning("SMO hit max_iter=%d before reaching tol=%g", max_iter, tol)

    score = -y * grad
    free = (alpha > 0) & (alpha < C)
    if np.any(free):
        bias = float(np.mean(score[free]))
    else:
        up = (pos & (alpha < C)) | (~pos & (alpha > 0))
        low = (pos & (alpha > 0)) | (~pos & (alpha < C))
        bias = 0.5 * (np.max(score[up]) + np.min(score[low]))
    return alpha, bias, it


def _check_rows(rows) -> np.ndarray:
    x = np.atleast_2d(np.asarray(rows, dtype=np.float64))
    if not np.all(np.isfinite(x)):
        raise SvmError("features contain non-finite values")
    return x


def smo_train(rows, labels, C: float = 1.0, kernel: KernelParams = KernelParams(),
              tol: float = 1e-3, scaler=None) -> SvmModel:
    """Train on ``rows``; ``scaler`` is an optional ``(mean, std)`` pair
    applied to every input before kernel evaluation."""
    x = _check_rows(rows)
    y = _check_labels(labels)
    if len(x) != len(y):
        raise SvmError("one label per row required")
    mean = std = None
    if scaler is not None:
        mean, std = (np.asarray(v, dtype=np.float64) for v in scaler)
        x = (x - mean) / std
    K = rbf_matrix(x, x, kernel.sigma)
    alpha, bias, n_iter = smo_solve(K, y, C, tol)
    sv = alpha > 0
    return SvmModel(x[sv], alpha[sv] * y[sv], bias, C, kernel, mean, std, n_iter=n_iter)


def standardizer(rows):
    x = np.asarray(rows, dtype=np.float64)
    mean = x.mean(axis=0)
    std = x.std(axis=0)
    return mean, np.where(std > 0, std, 1.0)


def kkt_report(model: SvmModel, rows, labels) -> float:
    """Largest KKT complementarity violation over the training set.

    Each row's dual variable is recovered by matching it against the stored
    support vectors; rows not stored have a = 0.
    """
    x = model.scale(_check_rows(rows))
    y = np.asarray(labels, dtype=np.float64).reshape(-1)
    stored = {sv.tobytes(): a for sv, a in zip(model.support_vectors, model.alphas)}
    alpha = np.array([stored.get(row.tobytes(), 0.0) for row in x])
    f = rbf_matrix(x, model.support_vectors, model.kernel.sigma) @ model.coefficients + model.bias
    margin = y * f
    at_upper = alpha >= model.C * (1.0 - 1e-12)
    at_zero = alpha <= 0
    viol = np.where(at_zero, np.maximum(0.0, 1.0 - margin),
                    np.where(at_upper, np.maximum(0.0, margin - 1.0), np.abs(1.0 - margin)))
    return float(np.max(viol)) if viol.size else 0.0


def stratified_folds(labels, n_folds: int, seed: int = 0) -> np.ndarray:
    """Fold index per example, class proportions balanced across folds."""
    y = np.asarray(labels)
    rng = np.random.default_rng(seed)
    folds = np.empty(len(y), dtype=int)
    for cls in np.unique(y):
        idx = np.flatnonzero(y == cls)
        rng.shuffle(idx)
        folds[idx] = np.arange(len(idx)) % n_folds
    return folds


@dataclass
class CvResult:
    C: float
    sigma: float
    accuracy: float
    heldout_values: np.ndarray
    grid: dict


def cross_validate(rows, labels, Cs=(0.1, 1.0, 10.0, 100.0), sigmas=(0.5, 1.0, 2.0, 4.0),
                   n_folds: int = 5, tol: float = 1e-3, seed: int = 0) -> CvResult:
    """Grid search over (C, sigma) by stratified k-fold accuracy.

    ``rows`` are assumed already standardised. Ties go to the smaller C then
    the larger sigma (fewer support vectors). The held-out decision values
    of the winning setting are returned for sigmoid calibration.
    """
    x = _check_rows(rows)
    y = _check_labels(labels)
    folds = stratified_folds(y, n_folds, seed)
    d2 = sq_distances(x, x)
    grid = {}
    best = None
    for sigma in sigmas:
        K = np.exp(-d2 / (2.0 * sigma * sigma))
        for C in Cs:
            heldout = np.empty(len(y))
            for k in range(n_folds):
                test = folds == k
                train = ~test
                alpha, bias, _ = smo_solve(K[np.ix_(train, train)], y[train], C, tol)
                heldout[test] = K[np.ix_(test, train)] @ (alpha * y[train]) + bias
            acc = float(np.mean(np.sign(heldout) == y))
            grid[(C, sigma)] = acc
            key = (acc, -C, sigma)
            if best is None or key > best[0]:
                best = (key, C, sigma, heldout)
    _, C, sigma, heldout = best
    return CvResult(C, sigma, best[0][0], heldout, grid)


def train_calibrated(rows, labels, Cs=(0.1, 1.0, 10.0, 100.0), sigmas=(0.5, 1.0, 2.0, 4.0),
                     n_folds: int = 5, tol: float = 1e-3, seed: int = 0):
    """Standardise, pick (C, sigma) by cross-validation, train, and fit the
    sigmoid on the held-out decision values. Returns ``(model, cv_result)``."""
    x = _check_rows(rows)
    y = _check_labels(labels)
    mean, std = standardizer(x)
    xs = (x - mean) / std
    cv = cross_validate(xs, y, Cs, sigmas, n_folds, tol, seed)
    model = smo_train(x, y, cv.C, KernelParams(cv.sigma), tol, scaler=(mean, std))
    model.platt = fit_sigmoid(cv.heldout_values, y)
    return model, cv
