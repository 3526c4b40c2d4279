"""Brute-force and Monte Carlo checks of the DPP/kDPP regularization identities.

Exhaustive checks enumerate every subset and compare the expectation of
``C K_CC^{-1} C^T`` against its closed form. They are meant for n of a
dozen or so; the cost is O(2^n n^3).
"""

from dataclasses import dataclass, field
import itertools
import math

import numpy as np
from scipy.linalg import hessenberg

from .kernel_core import (
    ElemSymTable,
    Spectrum,
    eigendecompose,
    loo_ratio,
    marginal_kernel,
)
from .regressors import fit_krr, fit_ridgeless
from .samplers import Sampler, SamplerConfig, stream_key, subset_counts, total_variation

MAX_DPP_N = 12
MAX_KDPP_N = 14


@dataclass
class IdentityReport:
    name: str
    lhs: np.ndarray | float
    rhs: np.ndarray | float
    method: str = "exhaustive"
    draws: int | None = None
    tolerance: float = 1e-8
    extra: dict = field(default_factory=dict)

    @property
    def abs_error(self):
        return float(np.linalg.norm(np.asarray(self.lhs) - np.asarray(self.rhs)))

    @property
    def rel_error(self):
        return self.abs_error / max(float(np.linalg.norm(np.asarray(self.rhs))), 1e-30)

    @property
    def passed(self):
        if "passed" in self.extra:
            return bool(self.extra["passed"])
        return self.rel_error <= self.tolerance

    def to_dict(self, include_matrices=False):
        out = {
            "name": self.name,
            "method": self.method,
            "abs_error": self.abs_error,
            "rel_error": self.rel_error,
            "tolerance": self.tolerance,
            "passed": self.passed,
        }
        if self.draws is not None:
            out["draws"] = self.draws
        if include_matrices:
            out["lhs"] = np.asarray(self.lhs).tolist()
            out["rhs"] = np.asarray(self.rhs).tolist()
        out.update({k: v for k, v in self.extra.items() if k != "passed"})
        return out


def random_pd_matrix(n, rng, log10_range=(-1.0, 1.0)):
    """Symmetric PD matrix with Haar-random eigenvectors and log-uniform eigenvalues."""
    q, r = np.linalg.qr(rng.standard_normal((n, n)))
    q = q * np.sign(np.diag(r))
    lam = 10.0 ** rng.uniform(*log10_range, size=n)
    k = (q * lam) @ q.T
    return 0.5 * (k + k.T)


def _scatter_inverse(k, subset):
    n = k.shape[0]
    out = np.zeros((n, n))
    if subset:
        idx = np.array(subset)
        out[np.ix_(idx, idx)] = np.linalg.inv(k[np.ix_(idx, idx)])
    return out


def _all_subsets(n, sizes):
    for r in sizes:
        yield from itertools.combinations(range(n), r)


def elem_sym_matrix(a, k=None):
    """``e_k`` of a general square matrix, from its characteristic polynomial.

    ``det(tI - A) = sum_k (-1)^k e_k(A) t^(n-k)``. The polynomial is expanded
    from the upper Hessenberg form ``H`` of ``A`` with the recurrence
    ``p_j = (t - h_jj) p_{j-1} - sum_{i<j} h_ij (prod_{m=i+1..j} h_{m,m-1}) p_{i-1}``.
    Returns all of ``e_0 .. e_n`` when ``k`` is None.
    """
    a = np.asarray(a, dtype=float)
    n = a.shape[0]
    h = hessenberg(a)
    polys = [np.array([1.0])]  # coefficients in increasing powers of t
    for j in range(n):
        p = np.zeros(j + 2)
        p[1:] += polys[j]
        p[:-1] -= h[j, j] * polys[j]
        prod = 1.0
        for i in range(j - 1, -1, -1):
            prod *= h[i + 1, i]
            p[: i + 1] -= h[i, j] * prod * polys[i]
        polys.append(p)
    coeffs = polys[n]
    e = np.array([(-1) ** r * coeffs[n - r] for r in range(n + 1)])
    return e if k is None else float(e[k])


def sum_principal_minors(a, k):
    """``e_k(A)`` as the sum of all k x k principal minors (brute force)."""
    a = np.asarray(a, dtype=float)
    if k == 0:
        return 1.0
    return math.fsum(np.linalg.det(a[np.ix_(c, c)]) for c in itertools.combinations(range(a.shape[0]), k))


def kdpp_expectation_spectral(spectrum: Spectrum, k, table=None):
    """``sum_l v_l v_l^T / (lam_l + e_k(lam_-l) / e_{k-1}(lam_-l))``."""
    lam = spectrum.eigenvalues
    if table is None:
        table = ElemSymTable(lam, max_degree=k)
    denom = np.array([lam[l] + loo_ratio(table, l, k) for l in range(lam.shape[0])])
    v = spectrum.eigenvectors
    return (v / denom) @ v.T


def dpp_law(k, alpha):
    """Exact ``Pr(Y = C) = det(K_CC / alpha) / det(I + K / alpha)`` for every subset."""
    k = np.asarray(k, dtype=float)
    n = k.shape[0]
    if n > MAX_DPP_N:
        raise ValueError(f"exhaustive DPP enumeration capped at n={MAX_DPP_N}")
    _, logz = np.linalg.slogdet(np.eye(n) + k / alpha)
    law = {}
    for c in _all_subsets(n, range(n + 1)):
        if c:
            _, ld = np.linalg.slogdet(k[np.ix_(c, c)] / alpha)
            law[c] = math.exp(ld - logz)
        else:
            law[c] = math.exp(-logz)
    return law


def kdpp_law(k_mat, k):
    """Exact ``Pr(Y = C) = det(K_CC) / e_k(K)`` for every size-k subset."""
    k_mat = np.asarray(k_mat, dtype=float)
    n = k_mat.shape[0]
    if n > MAX_KDPP_N:
        raise ValueError(f"exhaustive kDPP enumeration capped at n={MAX_KDPP_N}")
    dets = {c: np.linalg.det(k_mat[np.ix_(c, c)]) for c in itertools.combinations(range(n), k)}
    z = math.fsum(dets.values())
    return {c: d / z for c, d in dets.items()}, z


def expect_dpp_exhaustive(k, alpha, tolerance=1e-9) -> IdentityReport:
    """``E[C K_CC^{-1} C^T]`` over DPP(K/alpha) against ``(K + alpha I)^{-1}``."""
    k = np.asarray(k, dtype=float)
    n = k.shape[0]
    law = dpp_law(k, alpha)
    lhs = np.zeros((n, n))
    for c, p in law.items():
        if c:
            lhs += p * _scatter_inverse(k, c)
    rhs = np.linalg.inv(k + alpha * np.eye(n))
    mass = math.fsum(law.values())
    return IdentityReport("thm1", lhs, rhs, tolerance=tolerance,
                          extra={"n": n, "alpha": alpha, "mass_error": abs(mass - 1.0)})


def _kdpp_enumerated(k_mat, k):
    n = k_mat.shape[0]
    law, z = kdpp_law(k_mat, k)
    lhs = np.zeros((n, n))
    for c, p in law.items():
        lhs += p * _scatter_inverse(k_mat, c)
    return lhs, z


def expect_kdpp_exhaustive(k_mat, k, tolerance=1e-8) -> IdentityReport:
    """Enumerated kDPP expectation against the spectral leave-one-out formula."""
    k_mat = np.asarray(k_mat, dtype=float)
    n = k_mat.shape[0]
    if not 1 <= k <= n:
        raise ValueError(f"need 1 <= k <= n, got k={k}")
    lhs, z = _kdpp_enumerated(k_mat, k)
    spec = eigendecompose(k_mat)
    table = ElemSymTable(spec.eigenvalues, max_degree=k)
    rhs = kdpp_expectation_spectral(spec, k, table)
    return IdentityReport("cor4", lhs, rhs, tolerance=tolerance,
                          extra={"n": n, "k": k, "mass_error": abs(z / table.e(k) - 1.0)})


def lemma2_check(k_mat, k, u, w, tolerance=1e-8) -> IdentityReport:
    """``E[u^T C K_CC^{-1} C^T w] = (e_k(K) - e_k(K - w u^T)) / e_k(K)`` under kDPP(K).

    ``extra["spectral_rel_error"]`` compares the same expectation against
    ``u^T M w`` with ``M`` the spectral kDPP expectation matrix.
    """
    k_mat = np.asarray(k_mat, dtype=float)
    u = np.asarray(u, dtype=float)
    w = np.asarray(w, dtype=float)
    lhs_mat, _ = _kdpp_enumerated(k_mat, k)
    lhs = float(u @ lhs_mat @ w)
    ek = elem_sym_matrix(k_mat, k)
    ek_upd = elem_sym_matrix(k_mat - np.outer(w, u), k)
    rhs = (ek - ek_upd) / ek
    spec = eigendecompose(k_mat)
    spectral = float(u @ kdpp_expectation_spectral(spec, k) @ w)
    spectral_err = abs(spectral - lhs) / max(abs(lhs), 1e-30)
    passed = abs(lhs - rhs) / max(abs(rhs), 1e-30) <= tolerance and spectral_err <= tolerance
    return IdentityReport("lemma2", lhs, rhs, tolerance=tolerance,
                          extra={"k": k, "spectral": spectral,
                                 "spectral_rel_error": spectral_err, "passed": passed})


def prop5_bound_check(k_mat, k, tolerance=1e-8) -> IdentityReport:
    """Smallest eigenvalue of ``E[C K_CC^{-1} C^T] - sum_l v v^T / (lam_l + a)``.

    ``a`` is the tail sum ``lam_k + ... + lam_n`` (1-based, descending). The
    report passes when that eigenvalue is at least ``-tolerance``.
    """
    k_mat = np.asarray(k_mat, dtype=float)
    lhs, _ = _kdpp_enumerated(k_mat, k)
    spec = eigendecompose(k_mat)
    lam = spec.eigenvalues
    a = math.fsum(lam[k - 1:])
    v = spec.eigenvectors
    bound = (v / (lam + a)) @ v.T
    gap = float(np.linalg.eigvalsh(0.5 * ((lhs - bound) + (lhs - bound).T))[0])
    return IdentityReport("prop5", lhs, bound, tolerance=tolerance,
                          extra={"k": k, "alpha": a, "min_gap_eigenvalue": gap,
                                 "passed": gap >= -tolerance})


def _esym_direct(sigma):
    """``e_0 .. e_n`` of a vector from ``prod (t - sigma_i)`` via numpy.poly."""
    c = np.poly(np.asarray(sigma, dtype=float))
    return np.array([(-1) ** r * c[r] for r in range(len(c))])


def lemma6_check(sigma, k, l, slack=1e-8) -> IdentityReport:
    """``e_{k+1}(s) / e_k(s) <= sum_{i>l} s_i / (k - l + 1)`` for sorted ``s >= 0``, ``k >= l > 0``."""
    s = np.sort(np.asarray(sigma, dtype=float))[::-1]
    if not (k >= l > 0):
        raise ValueError("need k >= l > 0")
    e = _esym_direct(s)
    lhs = e[k + 1] / e[k] if k + 1 < len(e) else 0.0
    rhs = math.fsum(s[l:]) / (k - l + 1)
    return IdentityReport("lemma6", lhs, rhs, tolerance=slack,
                          extra={"k": k, "l": l, "passed": lhs <= rhs * (1 + slack) + 1e-300})


def remark_bound_check(lambdas, k, slack=1e-8) -> IdentityReport:
    """Lower bound on the kDPP regularizer for the smallest eigenvalue.

    Checks ``e_k(lam_-n) / e_{k-1}(lam_-n) >= ((n-k)/k) lam_{n-1} (lam_{n-1}/lam_1)^(k-1)``.
    """
    lam = np.sort(np.asarray(lambdas, dtype=float))[::-1]
    n = lam.shape[0]
    if n < 2 or not 1 <= k <= n:
        raise ValueError("need n >= 2 and 1 <= k <= n")
    table = ElemSymTable(lam, max_degree=k)
    lhs = loo_ratio(table, n - 1, k)
    rhs = (n - k) / k * lam[n - 2] * (lam[n - 2] / lam[0]) ** (k - 1)
    return IdentityReport("remark", lhs, rhs, tolerance=slack,
                          extra={"k": k, "passed": lhs >= rhs * (1 - slack)})


def _mc_summary(preds, krr):
    draws = preds.shape[0]
    mean = preds.mean(axis=0)
    se = preds.std(axis=0, ddof=1) / math.sqrt(draws) if draws > 1 else np.full_like(mean, np.inf)
    dev = np.abs(mean - krr)
    z = np.where(se > 0, dev / np.where(se > 0, se, 1.0), np.where(dev > 1e-12, np.inf, 0.0))
    return mean, se, dev, z


def expectation_mc(k_mat, y, alpha, draws, k_test, seed=0, threads=1, jitter=0.0,
                   checkpoints=()):
    """Monte Carlo mean of ridgeless predictions over DPP(K/alpha) versus KRR.

    ``k_test`` holds kernel rows of the test points against the training set.
    Empty subsets contribute the zero predictor. ``checkpoints`` lists draw
    counts at which the running mean is also summarized (root-mean-square
    deviation and standard error over test points), using nested prefixes of
    the same draws.
    """
    k_mat = np.asarray(k_mat, dtype=float)
    y = np.asarray(y, dtype=float)
    k_test = np.atleast_2d(k_test)
    spec = eigendecompose(k_mat)
    sampler = Sampler(SamplerConfig("dpp", alpha=alpha, seed=seed), k_mat.shape[0], spectrum=spec)
    subsets = sampler.draw_many(draws, stream_key(seed, 7), threads=threads)
    preds = ridgeless_predictions(k_mat, y, subsets, k_test, jitter)
    krr = fit_krr(k_mat, y, alpha).predict_from_kernel(k_test)
    mean, se, dev, z = _mc_summary(preds, krr)
    trace = []
    for c in sorted(set(int(c) for c in checkpoints)):
        if not 1 < c <= draws:
            raise ValueError(f"checkpoint {c} outside 2..{draws}")
        _, se_c, dev_c, z_c = _mc_summary(preds[:c], krr)
        trace.append({"draws": c, "rms_deviation": float(np.sqrt(np.mean(dev_c ** 2))),
                      "rms_standard_error": float(np.sqrt(np.mean(se_c ** 2))),
                      "max_z": float(z_c.max())})
    return IdentityReport(
        "eq2-mc", mean, krr, method="monte_carlo", draws=draws, tolerance=4.0,
        extra={"max_abs_deviation": float(dev.max()), "max_standard_error": float(se.max()),
               "max_z": float(z.max()), "passed": bool(np.all(z <= 4.0)),
               "deviation": dev.tolist(), "standard_error": se.tolist(),
               "checkpoints": trace},
    )


def sampler_law_check(k_mat, scheme, k=None, alpha=1.0, draws=200_000, seed=0, threads=1,
                      tv_limit=0.02, se_multiple=3.0, slack=1e-3) -> IdentityReport:
    """Empirical subset law of the DPP or kDPP sampler against enumeration.

    Passes when the total variation distance is below ``tv_limit``. For the
    DPP, each inclusion frequency must also lie within ``se_multiple``
    binomial standard errors plus ``slack`` of the marginal ``P_ii``.
    """
    k_mat = np.asarray(k_mat, dtype=float)
    n = k_mat.shape[0]
    spec = eigendecompose(k_mat)
    if scheme == "kdpp":
        law, _ = kdpp_law(k_mat, k)
        config = SamplerConfig("kdpp", k=k, seed=seed)
    elif scheme == "dpp":
        law = dpp_law(k_mat, alpha)
        config = SamplerConfig("dpp", alpha=alpha, seed=seed)
    else:
        raise ValueError(f"no exact law for scheme {scheme!r}")
    subsets = Sampler(config, n, spectrum=spec).draw_many(draws, stream_key(seed, 8), threads=threads)
    tv = total_variation(subset_counts(subsets, n), law)
    freq = np.zeros(n)
    for s in subsets:
        freq[s] += 1
    freq /= draws
    if scheme == "kdpp":
        marg = np.zeros(n)
        for c, p in law.items():
            marg[list(c)] += p
    else:
        marg = np.diag(marginal_kernel(spec, alpha))
    se = np.sqrt(marg * (1 - marg) / draws)
    excess = float(np.max(np.abs(freq - marg) - (se_multiple * se + slack)))
    passed = tv < tv_limit and (scheme == "kdpp" or excess <= 0.0)
    return IdentityReport(
        f"sampler-{scheme}", freq, marg, method="monte_carlo", draws=draws, tolerance=tv_limit,
        extra={"n": n, "k": k if scheme == "kdpp" else None,
               "alpha": alpha if scheme == "dpp" else None,
               "total_variation": tv, "inclusion_excess": excess, "passed": passed},
    )


def ridgeless_predictions(k_mat, y, subsets, k_test, jitter=0.0):
    """(draws, t) matrix of ridgeless predictions, one row per subset."""
    out = np.zeros((len(subsets), k_test.shape[0]))
    cache = {}
    for d, s in enumerate(subsets):
        if s.size == 0:
            continue
        key = s.tobytes()
        if key not in cache:
            cache[key] = fit_ridgeless(k_mat, y, s, jitter).predict_from_kernel(k_test)
        out[d] = cache[key]
    return out
