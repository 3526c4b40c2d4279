"""Ridgeless and ridge kernel regressors, Nystrom approximations, ensembles.

Predictors store dual weights over their landmarks. Prediction needs the
kernel between query points and the training set; callers that already hold
that block (experiments, Monte Carlo checks) use ``predict_from_kernel`` and
skip re-evaluating the kernel.
"""

from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import cho_solve, solve_triangular
from scipy.linalg.lapack import dpotrf

from .errors import FactorizationError
from .kernel_core import KernelSpec, cross_kernel

DEFAULT_EPSILON = 1e-12
_BLOCK = 2048


def cholesky(a):
    """Lower Cholesky factor; raises :class:`FactorizationError` with the failing pivot."""
    a = np.asarray(a, dtype=float)
    c, info = dpotrf(a, lower=1, clean=1, overwrite_a=0)
    if info > 0:
        raise FactorizationError(a.shape[0], info)
    if info < 0:
        raise ValueError(f"dpotrf: illegal argument {-info}")
    return c


def _subset(subset, n):
    s = np.asarray(subset, dtype=np.intp).reshape(-1)
    if s.size and (s.min() < 0 or s.max() >= n):
        raise IndexError("subset index out of range")
    if np.unique(s).size != s.size:
        raise ValueError("subset has duplicate indices")
    return s


@dataclass(frozen=True)
class RidgelessPredictor:
    """``f(x) = k_x[C]^T beta`` with ``(K_CC + jitter I) beta = y_C``.

    An empty subset gives the zero predictor.
    """

    subset: np.ndarray
    dual_weights: np.ndarray
    landmarks: np.ndarray | None = None
    kernel: KernelSpec | None = None

    @property
    def is_zero(self):
        return self.subset.size == 0

    def predict_from_kernel(self, k_rows):
        """Predictions given kernel rows against the full training set, shape (t, n)."""
        k_rows = np.atleast_2d(k_rows)
        if self.is_zero:
            return np.zeros(k_rows.shape[0])
        return k_rows[:, self.subset] @ self.dual_weights

    def predict(self, x):
        x = np.atleast_2d(np.asarray(x, dtype=float))
        if self.is_zero:
            return np.zeros(x.shape[0])
        if self.landmarks is None or self.kernel is None:
            raise ValueError("predictor was fitted without points; use predict_from_kernel")
        out = np.empty(x.shape[0])
        for a in range(0, x.shape[0], _BLOCK):
            out[a:a + _BLOCK] = cross_kernel(x[a:a + _BLOCK], self.landmarks, self.kernel) @ self.dual_weights
        return out


def fit_ridgeless(k, y, subset, jitter=0.0, points=None, kernel=None) -> RidgelessPredictor:
    """Minimum-norm interpolant of ``y`` on the landmarks ``subset``."""
    k = np.asarray(k)
    y = np.asarray(y, dtype=float)
    s = _subset(subset, k.shape[0])
    if s.size == 0:
        return RidgelessPredictor(s, np.zeros(0))
    block = k[np.ix_(s, s)]
    if jitter:
        block = block + jitter * np.eye(s.size)
    c = cholesky(block)
    beta = cho_solve((c, True), y[s])
    landmarks = None if points is None else np.asarray(points, dtype=float)[s]
    return RidgelessPredictor(s, beta, landmarks, kernel)


@dataclass(frozen=True)
class KRRPredictor:
    """Kernel ridge regression on all training points: ``(K + alpha I) w = y``."""

    dual_weights: np.ndarray
    alpha: float
    points: np.ndarray | None = None
    kernel: KernelSpec | None = None

    def predict_from_kernel(self, k_rows):
        return np.atleast_2d(k_rows) @ self.dual_weights

    def predict(self, x):
        if self.points is None or self.kernel is None:
            raise ValueError("predictor was fitted without points; use predict_from_kernel")
        x = np.atleast_2d(np.asarray(x, dtype=float))
        out = np.empty(x.shape[0])
        for a in range(0, x.shape[0], _BLOCK):
            out[a:a + _BLOCK] = cross_kernel(x[a:a + _BLOCK], self.points, self.kernel) @ self.dual_weights
        return out


def fit_krr(k, y, alpha, points=None, kernel=None) -> KRRPredictor:
    if not alpha > 0:
        raise ValueError("alpha must be positive")
    k = np.asarray(k)
    c = cholesky(k + alpha * np.eye(k.shape[0]))
    w = cho_solve((c, True), np.asarray(y, dtype=float))
    pts = None if points is None else np.asarray(points, dtype=float)
    return KRRPredictor(w, float(alpha), pts, kernel)


@dataclass(frozen=True)
class EnsemblePredictor:
    """Equal-weight average of member predictors."""

    members: tuple = field(default_factory=tuple)

    @property
    def m(self):
        return len(self.members)

    def _mean(self, preds):
        total = np.zeros_like(preds[0])
        for p in preds:  # fixed left-to-right order keeps results reproducible
            total += p
        return total / len(preds)

    def predict_from_kernel(self, k_rows):
        return self._mean([p.predict_from_kernel(k_rows) for p in self.members])

    def predict(self, x):
        return self._mean([p.predict(x) for p in self.members])


def fit_ensemble(k, y, subsets, jitter=DEFAULT_EPSILON, points=None, kernel=None):
    if not subsets:
        raise ValueError("an ensemble needs at least one subset")
    return EnsemblePredictor(tuple(
        fit_ridgeless(k, y, s, jitter, points, kernel) for s in subsets
    ))


def predict(p, x):
    return p.predict(x)


@dataclass(frozen=True)
class NystromApprox:
    """``K_hat = K[:, C] (K_CC + eps I)^{-1} K[C, :]``, kept in factored form."""

    subset: np.ndarray
    cross_block: np.ndarray
    chol: np.ndarray
    epsilon: float

    def features(self):
        """``B`` with ``K_hat = B B^T``; symmetric PSD by construction."""
        return solve_triangular(self.chol, self.cross_block.T, lower=True).T

    def matrix(self):
        b = self.features()
        return b @ b.T


def nystrom(k, subset, epsilon=DEFAULT_EPSILON) -> NystromApprox:
    k = np.asarray(k)
    s = _subset(subset, k.shape[0])
    if s.size == 0:
        raise ValueError("Nystrom approximation needs a non-empty subset")
    block = k[np.ix_(s, s)]
    if epsilon:
        block = block + epsilon * np.eye(s.size)
    return NystromApprox(s, np.array(k[:, s]), cholesky(block), float(epsilon))


def ensemble_nystrom(k, subsets, epsilon=DEFAULT_EPSILON):
    """Average of the member Nystrom approximations, as a dense matrix."""
    if not subsets:
        raise ValueError("an ensemble needs at least one subset")
    total = np.zeros(np.shape(k))
    for s in subsets:
        total += nystrom(k, s, epsilon).matrix()
    return total / len(subsets)


def relative_frobenius_error(k, k_hat):
    k = np.asarray(k)
    return float(np.linalg.norm(k - k_hat) / np.linalg.norm(k))
