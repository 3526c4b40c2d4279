"""Landmark samplers: uniform, ridge-leverage, L-ensemble DPP and kDPP.

All samplers take an explicit ``numpy.random.Generator``. Reproducible
experiments obtain one generator per draw from :func:`draw_rng`, a Philox
stream keyed by the master seed and positioned by the draw index, so the
result of draw ``i`` never depends on how draws are scheduled.
"""

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
import math
from typing import Literal

import numpy as np

from .errors import SamplingError
from .kernel_core import ElemSymTable, Spectrum

_MASS_FLOOR = 1e-9

Scheme = Literal["uniform", "rls", "dpp", "kdpp"]


def stream_key(seed, *tags):
    """128-bit Philox key derived from a master seed and integer tags."""
    ss = np.random.SeedSequence(int(seed), spawn_key=tuple(int(t) for t in tags))
    return ss.generate_state(2, np.uint64)


def draw_rng(key, index):
    """Generator for draw ``index`` of the stream identified by ``key``.

    The draw index occupies the third counter word, so distinct draws get
    disjoint blocks of 2**128 outputs.
    """
    counter = np.array([0, 0, int(index), 0], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key, counter=counter))


@dataclass(frozen=True)
class SamplerConfig:
    scheme: Scheme = "kdpp"
    k: int = 10
    alpha: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if self.scheme not in ("uniform", "rls", "dpp", "kdpp"):
            raise ValueError(f"unknown scheme {self.scheme!r}")
        if self.scheme != "dpp" and self.k < 1:
            raise ValueError("k must be at least 1")
        if not math.isfinite(self.alpha):
            raise ValueError("alpha must be finite")


def _sorted(idx):
    out = np.sort(np.asarray(idx, dtype=np.intp))
    out.setflags(write=False)
    return out


def sample_uniform(n, k, rng):
    if not 1 <= k <= n:
        raise ValueError(f"need 1 <= k <= n, got k={k}, n={n}")
    return _sorted(rng.choice(n, size=k, replace=False))


def sample_rls(scores, k, rng):
    """k distinct indices, drawn one at a time proportionally to the remaining scores.

    Implemented with the Gumbel top-k trick: the k largest values of
    ``log(score) + Gumbel`` are distributed exactly as successive sampling
    without replacement.
    """
    scores = np.asarray(scores, dtype=float)
    n = scores.shape[0]
    if not 1 <= k <= n:
        raise ValueError(f"need 1 <= k <= n, got k={k}, n={n}")
    if not np.all(scores > 0) or not np.all(np.isfinite(scores)):
        raise ValueError("scores must be finite and strictly positive")
    keys = np.log(scores) + rng.gumbel(size=n)
    top = np.argpartition(-keys, k - 1)[:k] if k < n else np.arange(n)
    return _sorted(top)


def _projection_batch(v, uniforms, sizes):
    """Projection-DPP phase for a batch of draws.

    ``v`` has shape (B, n, r) and holds orthonormal columns, zero-padded past
    ``sizes[b]``. Step t of draw b consumes ``uniforms[b, t]``.
    """
    b_count, n, r_max = v.shape
    taken = np.zeros((b_count, n), dtype=bool)
    rows = np.arange(b_count)
    for t in range(r_max):
        active = sizes > t
        mass = (v * v).sum(axis=-1)
        np.maximum(mass, 0.0, out=mass)
        mass[taken] = 0.0
        cdf = np.cumsum(mass, axis=-1)
        total = cdf[:, -1]
        bad = active & (total < _MASS_FLOOR)
        if bad.any():
            b = int(np.flatnonzero(bad)[0])
            raise SamplingError(
                f"projection phase degenerate at step {t} of {int(sizes[b])}: "
                f"remaining mass {total[b]:.3e}"
            )
        target = uniforms[:, t] * total
        pick = np.minimum((cdf <= target[:, None]).sum(axis=-1), n - 1)
        row = v[rows, pick, :]
        norm2 = (row * row).sum(axis=-1)
        norm2[~active] = 1.0
        row = np.where(active[:, None], row, 0.0)
        coef = (v * row[:, None, :]).sum(axis=-1)
        v -= coef[:, :, None] * (row / norm2[:, None])[:, None, :]
        taken[rows[active], pick[active]] = True
    return [_sorted(np.flatnonzero(t)) for t in taken]


def _gather_columns(eigenvectors, idx, sizes):
    """(B, n, r_max) stack of selected eigenvector columns, zero-padded."""
    n = eigenvectors.shape[0]
    padded = np.concatenate([eigenvectors, np.zeros((n, 1))], axis=1)
    r_max = int(sizes.max()) if sizes.size else 0
    sel = np.full((len(idx), r_max), n, dtype=np.intp)
    for b, row in enumerate(idx):
        sel[b, : len(row)] = row
    return np.ascontiguousarray(padded[:, sel].transpose(1, 0, 2))


def projection_dpp_phase(vectors, rng):
    """Sample from the projection DPP spanned by orthonormal columns.

    At each step an index is drawn with probability proportional to its
    squared remaining row norm; the basis is then projected onto the
    orthogonal complement of that row, which removes the chosen coordinate
    from the span and lowers the rank by one.
    """
    v = np.array(vectors, dtype=float, copy=True)
    if v.ndim != 2:
        raise ValueError("expected an (n, r) matrix")
    r = v.shape[1]
    return _projection_batch(v[None], rng.random((1, r)), np.array([r]))[0]


def _dpp_batch(spectrum, alpha, uniforms):
    lam = spectrum.eigenvalues
    n = lam.shape[0]
    keep = uniforms[:, :n] < lam / (lam + alpha)
    idx = [np.flatnonzero(k) for k in keep]
    sizes = keep.sum(axis=1)
    if not sizes.any():
        return [_sorted([]) for _ in idx]
    v = _gather_columns(spectrum.eigenvectors, idx, sizes)
    return _projection_batch(v, uniforms[:, n:], sizes)


def _kdpp_eigen_batch(esym, k, uniforms):
    n = esym.n
    q = esym.inclusion_probabilities()
    r = np.full(uniforms.shape[0], k, dtype=np.intp)
    picked = np.zeros((uniforms.shape[0], n), dtype=bool)
    for j in range(n, 0, -1):
        p = q[j, r]
        take = (r > 0) & ((r >= j) | (uniforms[:, n - j] < p))
        picked[:, j - 1] = take
        r -= take
    return [np.flatnonzero(row) for row in picked]


def _kdpp_batch(spectrum, esym, k, uniforms):
    n = esym.n
    idx = _kdpp_eigen_batch(esym, k, uniforms)
    sizes = np.full(len(idx), k)
    v = _gather_columns(spectrum.eigenvectors, idx, sizes)
    return _projection_batch(v, uniforms[:, n:], sizes)


def sample_dpp(spectrum: Spectrum, alpha, rng):
    """Exact sample of the L-ensemble DPP with ``L = K / alpha``.

    Eigen-index l is kept with probability ``lam_l / (lam_l + alpha)``; the
    kept eigenvectors then go through the projection phase.
    """
    if not alpha > 0:
        raise ValueError("alpha must be positive")
    return _dpp_batch(spectrum, alpha, rng.random((1, 2 * spectrum.n)))[0]


def kdpp_eigen_indices(esym: ElemSymTable, k, rng):
    """Choose exactly k eigen-indices for a kDPP by walking the e_k table backwards."""
    _check_k(esym, k)
    return _kdpp_eigen_batch(esym, k, rng.random((1, esym.n)))[0]


def _check_k(esym, k):
    if not 1 <= k <= esym.n:
        raise ValueError(f"need 1 <= k <= n, got k={k}, n={esym.n}")
    if k > esym.max_degree:
        raise ValueError(f"table holds degrees up to {esym.max_degree}, need {k}")


def sample_kdpp(spectrum: Spectrum, esym: ElemSymTable, k, rng):
    """Exact sample of the kDPP with ``Pr(C) = det(K_CC) / e_k(K)``.

    ``esym`` must be built on ``spectrum.eigenvalues`` in the same order.
    """
    _check_k(esym, k)
    return _kdpp_batch(spectrum, esym, k, rng.random((1, esym.n + k)))[0]


class Sampler:
    """Binds a :class:`SamplerConfig` to the data its scheme needs.

    :meth:`draw_many` is the reproducible entry point: draw ``i`` reads its
    randomness from ``draw_rng(key, i)`` only, and DPP/kDPP draws are
    processed in blocks whose size depends on the problem size alone, so the
    output does not depend on ``threads``.
    """

    def __init__(self, config: SamplerConfig, n, spectrum=None, scores=None):
        self.config = config
        self.n = n
        self.spectrum = spectrum
        self.scores = scores
        self.esym = None
        if config.scheme != "dpp" and config.k > n:
            raise ValueError(f"k={config.k} exceeds n={n}")
        if config.scheme == "dpp" and not config.alpha > 0:
            raise ValueError("dpp sampling needs alpha > 0")
        if config.scheme in ("dpp", "kdpp") and spectrum is None:
            raise ValueError(f"{config.scheme} sampling needs a spectrum")
        if config.scheme == "rls" and scores is None:
            raise ValueError("rls sampling needs leverage scores")
        if config.scheme == "kdpp":
            self.esym = ElemSymTable(spectrum.eigenvalues, max_degree=config.k)

    def __call__(self, rng):
        c = self.config
        if c.scheme == "uniform":
            return sample_uniform(self.n, c.k, rng)
        if c.scheme == "rls":
            return sample_rls(self.scores, c.k, rng)
        if c.scheme == "dpp":
            return sample_dpp(self.spectrum, c.alpha, rng)
        return sample_kdpp(self.spectrum, self.esym, c.k, rng)

    def _width(self):
        return 2 * self.n if self.config.scheme == "dpp" else self.n + self.config.k

    def _block_size(self):
        r = self.n if self.config.scheme == "dpp" else self.config.k
        return int(max(1, min(4096, 2_000_000 // max(1, self.n * r))))

    def _block(self, key, start, count):
        if self.config.scheme in ("uniform", "rls"):
            return [self(draw_rng(key, i)) for i in range(start, start + count)]
        u = np.stack([draw_rng(key, i).random(self._width())
                      for i in range(start, start + count)])
        if self.config.scheme == "dpp":
            return _dpp_batch(self.spectrum, self.config.alpha, u)
        return _kdpp_batch(self.spectrum, self.esym, self.config.k, u)

    def draw_many(self, count, key, start=0, threads=1):
        """Draws ``start .. start+count-1`` of stream ``key``, in index order."""
        size = self._block_size()
        blocks = [(b, min(size, start + count - b)) for b in range(start, start + count, size)]
        if threads <= 1 or len(blocks) == 1:
            parts = [self._block(key, b, c) for b, c in blocks]
        else:
            with ThreadPoolExecutor(threads) as pool:
                parts = list(pool.map(lambda bc: self._block(key, *bc), blocks))
        return [s for part in parts for s in part]


def subset_counts(subsets, n):
    """Histogram of sampled subsets keyed by their index tuple."""
    counts = {}
    for s in subsets:
        t = tuple(int(i) for i in s)
        counts[t] = counts.get(t, 0) + 1
    return counts


def total_variation(empirical_counts, law):
    """TV distance between empirical counts and an exact law (both dicts keyed by subset)."""
    total = sum(empirical_counts.values())
    keys = set(empirical_counts) | set(law)
    return 0.5 * math.fsum(
        abs(empirical_counts.get(s, 0) / total - law.get(s, 0.0)) for s in keys
    )
