"""Kernels, Gram matrices, spectra and elementary symmetric polynomials.

Everything downstream (samplers, regressors, oracles) works from a dense
Gram matrix and its eigendecomposition, so both are computed here once and
passed around read-only.
"""

from dataclasses import dataclass
import math
from typing import Literal

import numpy as np
from scipy.spatial.distance import cdist, pdist, squareform

from .errors import DataError, PositiveDefinitenessError

_LOO_RATIO_LIMIT = 0.99
_LOO_ERROR_LIMIT = 1e-11
_LOG2 = math.log(2.0)


@dataclass(frozen=True)
class KernelSpec:
    family: Literal["gaussian", "laplace"] = "gaussian"
    bandwidth: float = 1.0

    def __post_init__(self):
        if self.family not in ("gaussian", "laplace"):
            raise ValueError(f"unknown kernel family {self.family!r}")
        if not (self.bandwidth > 0 and math.isfinite(self.bandwidth)):
            raise ValueError(f"bandwidth must be positive, got {self.bandwidth}")

    def from_sqdist(self, sqdist):
        if self.family == "gaussian":
            return np.exp(-sqdist / (2.0 * self.bandwidth**2))
        return np.exp(-np.sqrt(sqdist) / self.bandwidth)


def _as_points(x, name="points"):
    x = np.asarray(x, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    if x.ndim != 2 or x.shape[0] < 1 or x.shape[1] < 1:
        raise DataError(f"{name} must be a non-empty (n, d) array, got shape {x.shape}")
    if not np.all(np.isfinite(x)):
        raise DataError(f"{name} contain non-finite values")
    return x


def gram(points, spec: KernelSpec) -> np.ndarray:
    """Gram matrix ``K[i, j] = k(x_i, x_j)``.

    Distances are evaluated for ``i < j`` only and mirrored, so the result is
    exactly symmetric with a unit diagonal. The returned array is read-only.
    """
    x = _as_points(points)
    n = x.shape[0]
    if n == 1:
        k = np.ones((1, 1))
    else:
        k = squareform(spec.from_sqdist(pdist(x, "sqeuclidean")))
        np.fill_diagonal(k, 1.0)
    k.setflags(write=False)
    return k


def cross_kernel(x, landmarks, spec: KernelSpec) -> np.ndarray:
    """Rectangular kernel block ``[k(x_a, z_b)]``."""
    x = _as_points(x, "query points")
    z = _as_points(landmarks, "landmarks")
    if x.shape[1] != z.shape[1]:
        raise DataError(f"dimension mismatch: {x.shape[1]} vs {z.shape[1]}")
    return spec.from_sqdist(cdist(x, z, "sqeuclidean"))


@dataclass(frozen=True)
class Spectrum:
    """Eigenpairs of a symmetric matrix, eigenvalues in descending order."""

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray

    @property
    def n(self):
        return self.eigenvalues.shape[0]

    def reconstruct(self):
        v = self.eigenvectors
        return (v * self.eigenvalues) @ v.T


def eigendecompose(k, pd_tolerance=None, jitter=0.0, require_pd=True) -> Spectrum:
    """Symmetric eigendecomposition with a positive-definiteness gate.

    ``pd_tolerance`` defaults to ``1e-12 * lambda_max``. ``jitter`` adds a
    multiple of the identity before decomposing; it is never applied
    implicitly. With ``require_pd=False`` the gate is skipped and eigenvalues
    are clipped at zero, which is what PSD-only consumers (leverage scores)
    want.
    """
    k = np.asarray(k, dtype=float)
    if k.ndim != 2 or k.shape[0] != k.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {k.shape}")
    if jitter:
        k = k + jitter * np.eye(k.shape[0])
    lam, vec = np.linalg.eigh(k)
    lam, vec = lam[::-1].copy(), vec[:, ::-1].copy()
    if require_pd:
        tol = 1e-12 * max(lam[0], 0.0) if pd_tolerance is None else pd_tolerance
        if not lam[-1] > tol:
            raise PositiveDefinitenessError(lam[-1], tol)
    else:
        np.maximum(lam, 0.0, out=lam)
    lam.setflags(write=False)
    vec.setflags(write=False)
    return Spectrum(lam, vec)


# Elementary symmetric polynomials. Each table entry is stored as a mantissa
# in [0.5, 1) and a separate integer binary exponent, which keeps e_r of
# spectra spanning many orders of magnitude representable for n in the
# thousands (e_n of 2000 eigenvalues near 1e-6 is about 1e-12000).

_MIN_SHIFT = -1100  # below this, ldexp of a mantissa is exactly zero


def _scaled_add(ma, xa, mb, xb):
    top = np.maximum(np.where(ma > 0, xa, np.iinfo(np.int64).min),
                     np.where(mb > 0, xb, np.iinfo(np.int64).min))
    top = np.where((ma > 0) | (mb > 0), top, 0)
    da = np.clip(xa - top, _MIN_SHIFT, 0).astype(np.int32)
    db = np.clip(xb - top, _MIN_SHIFT, 0).astype(np.int32)
    m, x = np.frexp(np.ldexp(ma, da) + np.ldexp(mb, db))
    return m, np.where(m > 0, top + x, 0)


class ElemSymTable:
    """``E[j][r] = e_r(lam[0..j-1])`` for ``0 <= j <= n`` and ``0 <= r <= max_degree``.

    Built with the triangular recurrence
    ``E[j][r] = E[j-1][r] + lam[j-1] * E[j-1][r-1]``, whose addends are all
    non-negative for a PSD spectrum.
    """

    def __init__(self, lambdas, max_degree=None):
        lam = np.asarray(lambdas, dtype=float)
        if lam.ndim != 1:
            raise ValueError("lambdas must be a vector")
        if np.any(lam < 0) or not np.all(np.isfinite(lam)):
            raise ValueError("elementary symmetric tables need finite non-negative inputs")
        n = lam.shape[0]
        kmax = n if max_degree is None else int(max_degree)
        if not 0 <= kmax:
            raise ValueError("max_degree must be non-negative")
        self.lambdas = lam
        self.n = n
        self.max_degree = kmax

        mant = np.zeros((n + 1, kmax + 1))
        expo = np.zeros((n + 1, kmax + 1), dtype=np.int64)
        mant[:, 0] = 0.5
        expo[:, 0] = 1
        lm, lx = np.frexp(lam)
        for j in range(1, n + 1):
            ma, xa = mant[j - 1, 1:], expo[j - 1, 1:]
            mb = lm[j - 1] * mant[j - 1, :-1]
            xb = expo[j - 1, :-1] + lx[j - 1]
            mant[j, 1:], expo[j, 1:] = _scaled_add(ma, xa, mb, xb)
        self._mant = mant
        self._expo = expo
        self._mant.setflags(write=False)
        self._expo.setflags(write=False)
        self._incl = None

    def _check(self, j, r):
        if not (0 <= j <= self.n and 0 <= r <= self.max_degree):
            raise IndexError(f"entry ({j}, {r}) outside the table")

    def scaled(self, j, r):
        """Entry ``E[j][r]`` as ``(mantissa, exponent)``."""
        self._check(j, r)
        return float(self._mant[j, r]), int(self._expo[j, r])

    def value(self, j, r):
        m, x = self.scaled(j, r)
        return math.ldexp(m, x) if m else 0.0

    def log_value(self, j, r):
        m, x = self.scaled(j, r)
        return math.log(m) + x * _LOG2 if m else -math.inf

    def e(self, r):
        """``e_r`` of the full vector."""
        if r > self.n:
            return 0.0
        return self.value(self.n, r)

    def log_e(self, r):
        return self.log_value(self.n, r)

    def ratio(self, num, den):
        """``E[num] / E[den]`` for index pairs, without leaving scaled form."""
        mn, xn = self.scaled(*num)
        md, xd = self.scaled(*den)
        if md == 0:
            raise ZeroDivisionError(f"E{den} is zero")
        return math.ldexp(mn / md, xn - xd) if mn else 0.0


    def inclusion_probabilities(self):
        """``Q[j, r] = lam[j-1] * E[j-1][r-1] / E[j][r]`` for 1 <= r <= min(j, max_degree).

        This is the probability that a size-r elementary-symmetric term over
        the first j entries contains entry j; the kDPP eigen-index walk reads
        it directly. Entries outside the valid range are zero.
        """
        if self._incl is None:
            n, kmax = self.n, self.max_degree
            q = np.zeros((n + 1, kmax + 1))
            if kmax >= 1 and n >= 1:
                num_m = self._mant[:-1, :-1]
                den_m = self._mant[1:, 1:]
                shift = self._expo[:-1, :-1] - self._expo[1:, 1:]
                with np.errstate(divide="ignore", invalid="ignore"):
                    ratio = np.where(den_m > 0, num_m / np.where(den_m > 0, den_m, 1.0), 0.0)
                ratio = np.ldexp(ratio, np.clip(shift, _MIN_SHIFT, 1100).astype(np.int32))
                q[1:, 1:] = self.lambdas[:, None] * ratio
                jj, rr = np.indices(q.shape)
                q[rr == jj] = 1.0
                q[(rr > jj) | (rr == 0)] = 0.0
                np.clip(q, 0.0, 1.0, out=q)
            q.setflags(write=False)
            self._incl = q
        return self._incl


def elem_sym(lambdas, max_degree=None) -> ElemSymTable:
    return ElemSymTable(lambdas, max_degree)


def _norm(m, x):
    if m == 0:
        return 0.0, 0
    mm, dx = math.frexp(m)
    return mm, x + dx


def _loo_scaled(table, exclude, r):
    """``e_s`` of the vector without entry ``exclude``, for s = 0..r, scaled.

    Returns None when the subtraction is too ill-conditioned: either one step
    cancels more than 99% of ``e_s``, or the accumulated relative error bound
    exceeds ``_LOO_ERROR_LIMIT``.
    """
    lam_m, lam_x = math.frexp(float(table.lambdas[exclude]))
    unit = (table.n + 1) * 2.0**-53
    rel_err = 0.0
    out = [(0.5, 1)]
    for s in range(1, r + 1):
        pm, px = out[-1]
        tm, tx = _norm(lam_m * pm, lam_x + px)
        em, ex = table.scaled(table.n, s)
        if tm == 0:
            out.append((em, ex))
            continue
        if em == 0:
            return None
        c = math.ldexp(tm / em, tx - ex)
        if c > _LOO_RATIO_LIMIT:
            return None
        rel_err = (unit + c * rel_err) / (1.0 - c)
        if rel_err > _LOO_ERROR_LIMIT:
            return None
        # ex >= tx because c < 1
        out.append(_norm(em - math.ldexp(tm, tx - ex), ex))
    return out


def _loo_table(table, exclude, r):
    rest = np.delete(table.lambdas, exclude)
    return ElemSymTable(rest, max_degree=r)


def elem_sym_loo(table: ElemSymTable, exclude: int, r: int) -> float:
    """``e_r`` of the table's vector with entry ``exclude`` removed.

    Uses the downward recurrence ``e_r(rest) = e_r(all) - lam * e_{r-1}(rest)``
    while each subtraction removes at most 99% of the value and the running
    error bound stays small; otherwise the table is rebuilt without the
    excluded entry in O(n * r).
    """
    if not 0 <= exclude < table.n:
        raise IndexError(f"exclude index {exclude} out of range for n={table.n}")
    if not 0 <= r <= min(table.n - 1, table.max_degree):
        raise ValueError(f"degree {r} out of range")
    seq = _loo_scaled(table, exclude, r)
    if seq is None:
        return _loo_table(table, exclude, r).e(r)
    m, x = seq[r]
    return math.ldexp(m, x) if m else 0.0


def loo_ratio(table: ElemSymTable, exclude: int, k: int) -> float:
    """``e_k(rest) / e_{k-1}(rest)`` where ``rest`` drops entry ``exclude``.

    Zero when ``k == n`` since ``rest`` has only ``n - 1`` entries.
    """
    if not 1 <= k <= table.n:
        raise ValueError(f"k={k} out of range for n={table.n}")
    if k == table.n:
        return 0.0
    if k > table.max_degree:
        raise ValueError(f"table only holds degrees up to {table.max_degree}")
    seq = _loo_scaled(table, exclude, k)
    if seq is None:
        sub = _loo_table(table, exclude, k)
        return sub.ratio((sub.n, k), (sub.n, k - 1))
    (mn, xn), (md, xd) = seq[k], seq[k - 1]
    return math.ldexp(mn / md, xn - xd) if mn else 0.0


def marginal_kernel(spectrum: Spectrum, alpha: float) -> np.ndarray:
    """``P = K (K + alpha I)^{-1}`` assembled from the eigenpairs of ``K``."""
    if not alpha > 0:
        raise ValueError("alpha must be positive")
    v = spectrum.eigenvectors
    w = spectrum.eigenvalues / (spectrum.eigenvalues + alpha)
    p = (v * w) @ v.T
    return 0.5 * (p + p.T)


def ridge_leverage_scores(spectrum: Spectrum, alpha: float) -> np.ndarray:
    """Diagonal of the marginal kernel, without forming the n x n matrix."""
    if not alpha > 0:
        raise ValueError("alpha must be positive")
    w = spectrum.eigenvalues / (spectrum.eigenvalues + alpha)
    return (spectrum.eigenvectors**2) @ w


def expected_dpp_size(spectrum: Spectrum, alpha: float) -> float:
    lam = spectrum.eigenvalues
    return float(np.sum(lam / (lam + alpha)))


def alpha_for_effective_dimension(spectrum: Spectrum, target):
    """Ridge ``alpha`` at which ``trace(K (K + alpha I)^{-1})`` equals ``target``.

    Solved by bisection on log(alpha); the trace is strictly decreasing in
    alpha for a nonzero spectrum.
    """
    lam = np.asarray(spectrum.eigenvalues)
    rank = int(np.count_nonzero(lam > 0))
    if not 0 < target < rank:
        raise ValueError(f"target {target} must lie strictly between 0 and the rank {rank}")
    lo, hi = math.log(lam[lam > 0].min()) - 40.0, math.log(lam.max()) + 40.0
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if np.sum(lam / (lam + math.exp(mid))) > target:
            lo = mid
        else:
            hi = mid
    return math.exp(0.5 * (lo + hi))
