"""Experiment harness: data loading, stratified splits, ensemble runs, reports."""

from concurrent.futures import ThreadPoolExecutor
import csv
from dataclasses import dataclass, field, replace
import io
import json
import math
import time

import numpy as np

from .errors import DataError
from .kernel_core import (
    KernelSpec,
    alpha_for_effective_dimension,
    cross_kernel,
    eigendecompose,
    gram,
    ridge_leverage_scores,
)
from .regressors import (
    DEFAULT_EPSILON,
    fit_ridgeless,
    nystrom,
    relative_frobenius_error,
)
from .samplers import Sampler, SamplerConfig, stream_key

SCHEMA_VERSION = 1
MAX_GRAM_N = 5000

# (sigma, k, lambda_rls) per dataset; RLS sampling uses alpha = lambda_rls * n_train
DATASET_DEFAULTS = {
    "adult": (5.0, 250, 1e-3),
    "abalone": (3.0, 50, 1e-4),
    "wine_quality": (5.0, 100, 1e-4),
    "bike_sharing": (3.0, 250, 1e-3),
    "casp": (2.0, 250, 1e-3),
}

_CONSTANT_RTOL = 1e-8
_STREAM_SPLIT = 0
_STREAM_MEMBERS = 1
_STREAM_SUBSAMPLE = 2


@dataclass
class Dataset:
    features: np.ndarray
    labels: np.ndarray | None = None
    feature_names: list = field(default_factory=list)
    label_name: str | None = None

    @property
    def n(self):
        return self.features.shape[0]

    @property
    def d(self):
        return self.features.shape[1]

    def take(self, idx):
        idx = np.asarray(idx)
        return Dataset(self.features[idx], None if self.labels is None else self.labels[idx],
                       list(self.feature_names), self.label_name)


def _parse_float(cell):
    try:
        return float(cell)
    except ValueError:
        return None


def load_csv(path, label_column=None, delimiter=",", one_hot=False, ordinal=False):
    """Read a headered numeric table.

    Non-numeric columns are rejected unless listed in ``one_hot`` or
    ``ordinal`` (or either is ``True``, meaning every non-numeric column).
    One-hot columns expand to one indicator per category in sorted order;
    ordinal columns become the category's rank in sorted order.
    """
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh, delimiter=delimiter))
    rows = [r for r in rows if r and any(c.strip() for c in r)]
    if len(rows) < 2:
        raise DataError(f"{path}: need a header row and at least one data row")
    header = [h.strip() for h in rows[0]]
    body = rows[1:]
    for i, r in enumerate(body, start=2):
        if len(r) != len(header):
            raise DataError(f"{path}: line {i} has {len(r)} fields, header has {len(header)}")
    if label_column is not None and label_column not in header:
        raise DataError(f"{path}: label column {label_column!r} not in header")

    cols = list(zip(*body))
    features, names, labels = [], [], None
    for name, raw in zip(header, cols):
        raw = [c.strip() for c in raw]
        vals = [_parse_float(c) for c in raw]
        numeric = all(v is not None for v in vals)
        if name == label_column:
            if not numeric:
                raise DataError(f"{path}: label column {name!r} is not numeric")
            labels = np.array(vals, dtype=float)
            continue
        if numeric:
            features.append(np.array(vals, dtype=float))
            names.append(name)
            continue
        wants_onehot = one_hot is True or (one_hot and name in one_hot)
        wants_ordinal = ordinal is True or (ordinal and name in ordinal)
        cats = sorted(set(raw))
        if wants_onehot:
            for c in cats:
                features.append(np.array([v == c for v in raw], dtype=float))
                names.append(f"{name}={c}")
        elif wants_ordinal:
            rank = {c: i for i, c in enumerate(cats)}
            features.append(np.array([rank[v] for v in raw], dtype=float))
            names.append(name)
        else:
            bad = next(c for c, v in zip(raw, vals) if v is None)
            raise DataError(f"{path}: column {name!r} has non-numeric cell {bad!r}; "
                            "use one-hot or ordinal encoding")
    if not features:
        raise DataError(f"{path}: no feature columns")
    x = np.column_stack(features)
    if not np.all(np.isfinite(x)) or (labels is not None and not np.all(np.isfinite(labels))):
        raise DataError(f"{path}: non-finite values")
    return Dataset(x, labels, names, label_column)


def make_synthetic(n, seed=0, d=3, clusters=8, ratio=0.7, spread=0.5, noise=0.05):
    """Regression data drawn from Gaussian clusters of geometrically shrinking size.

    The small clusters hold few points, so they carry high leverage and make
    up most of the stratified tail. Labels stay well away from zero, which
    keeps SMAPE meaningful.
    """
    if n < clusters:
        raise ValueError("need at least one point per cluster")
    rng = np.random.default_rng(np.random.SeedSequence(int(seed), spawn_key=(99,)))
    w = ratio ** np.arange(clusters)
    sizes = np.floor(w / w.sum() * n).astype(int)
    sizes[0] += n - sizes.sum()
    centers = rng.uniform(-4.0, 4.0, (clusters, d))
    x = np.vstack([c + spread * rng.standard_normal((s, d)) for c, s in zip(centers, sizes)])
    x = x[rng.permutation(n)]
    z = x[:, 2 % d]
    y = 3.0 + np.sin(x[:, 0]) + 0.5 * np.cos(x[:, 1 % d]) + 0.3 * z / (1.0 + np.abs(z))
    y = y + noise * rng.standard_normal(n)
    return Dataset(x, y, [f"x{i}" for i in range(d)], "y")


def standardize(features, reference_idx=None):
    """Center and scale by the reference rows' statistics.

    Columns whose range on the reference rows is below ``1e-8`` of their
    magnitude count as constant and keep scale 1; dividing by a spread made
    of rounding noise would amplify it.
    """
    ref = features if reference_idx is None else features[reference_idx]
    mean = ref.mean(axis=0)
    std = ref.std(axis=0)
    constant = np.ptp(ref, axis=0) <= _CONSTANT_RTOL * np.abs(ref).max(axis=0)
    std = np.where(constant, 1.0, std)
    return (features - mean) / std, mean, std


def subsample(ds, size, seed):
    if size is None or size >= ds.n:
        return ds
    rng = np.random.default_rng(np.random.SeedSequence(int(seed), spawn_key=(_STREAM_SUBSAMPLE,)))
    return ds.take(np.sort(rng.choice(ds.n, size=size, replace=False)))


@dataclass
class StratifiedSplit:
    train_idx: np.ndarray
    test_bulk_idx: np.ndarray
    test_tail_idx: np.ndarray
    rls_threshold: float
    alpha_strat: float
    features: np.ndarray  # all rows, standardized with training statistics
    test_rls: np.ndarray = None

    @property
    def test_idx(self):
        return np.sort(np.concatenate([self.test_bulk_idx, self.test_tail_idx]))


def split_and_stratify(ds, spec: KernelSpec, train_fraction=0.5, seed=0,
                       alpha_factor=1e-4, quantile=0.7, tie_rtol=1e-9):
    """Random train/test split with bulk/tail stratification of the test set.

    Leverage scores come from the Gram matrix of the whole dataset (features
    standardized with training statistics) at ``alpha = alpha_factor *
    n_train``. Test points at or below the ``quantile`` of the test scores
    form the bulk, the rest the tail. Scores within ``tie_rtol`` of the
    threshold count as ties and go to the bulk.
    """
    if not 0 < train_fraction < 1:
        raise ValueError("train_fraction must lie in (0, 1)")
    n = ds.n
    n_train = int(math.floor(train_fraction * n))
    if n_train < 1 or n_train >= n:
        raise DataError(f"split of n={n} at {train_fraction} leaves an empty fold")
    if n > MAX_GRAM_N:
        raise DataError(f"n={n} exceeds the dense Gram cap {MAX_GRAM_N}; use --subsample")
    rng = np.random.default_rng(np.random.SeedSequence(int(seed), spawn_key=(_STREAM_SPLIT,)))
    perm = rng.permutation(n)
    train = np.sort(perm[:n_train])
    test = np.sort(perm[n_train:])
    x, _, _ = standardize(ds.features, train)
    alpha = alpha_factor * n_train
    spectrum = eigendecompose(gram(x, spec), require_pd=False)
    rls = ridge_leverage_scores(spectrum, alpha)
    test_rls = rls[test]
    threshold = float(np.quantile(test_rls, quantile))
    in_tail = test_rls > threshold * (1.0 + tie_rtol) + 1e-300
    return StratifiedSplit(train, test[~in_tail], test[in_tail], threshold, alpha, x, test_rls)


def smape(y, yhat):
    """Mean of ``|y - yhat| / ((|y| + |yhat|) / 2)``; a 0/0 term counts as 0."""
    y = np.asarray(y, dtype=float)
    yhat = np.asarray(yhat, dtype=float)
    if y.shape != yhat.shape:
        raise ValueError(f"length mismatch: {y.shape} vs {yhat.shape}")
    if y.size == 0:
        raise ValueError("smape of an empty vector")
    num = np.abs(y - yhat)
    den = (np.abs(y) + np.abs(yhat)) / 2.0
    terms = np.divide(num, den, out=np.zeros_like(num), where=den > 0)
    return float(terms.mean())


def _quartiles(values):
    vals = [v for v in values if v is not None]
    if not vals:
        return None
    a = np.asarray(vals, dtype=float)
    return {
        "mean": float(a.mean()),
        "q25": float(np.quantile(a, 0.25)),
        "q50": float(np.quantile(a, 0.5)),
        "q75": float(np.quantile(a, 0.75)),
    }


@dataclass
class ExperimentReport:
    kind: str
    params: dict
    records: list
    raw: list  # one dict per (scheme, m, repeat)

    def to_json(self):
        doc = {"schema_version": SCHEMA_VERSION, "kind": self.kind,
               "params": self.params, "records": self.records}
        return json.dumps(doc, indent=2, sort_keys=True) + "\n"

    def to_csv(self):
        if not self.raw:
            return ""
        buf = io.StringIO()
        cols = list(self.raw[0].keys())
        w = csv.DictWriter(buf, fieldnames=cols, lineterminator="\n")
        w.writeheader()
        for row in self.raw:
            w.writerow({c: ("" if row[c] is None else repr(row[c]) if isinstance(row[c], float) else row[c])
                        for c in cols})
        return buf.getvalue()

    def record(self, scheme, m):
        for r in self.records:
            if r["scheme"] == scheme and r["m"] == m:
                return r
        raise KeyError((scheme, m))


def _make_sampler(config, k_train):
    """Sampler over the rows of ``k_train``, plus the config with ``alpha`` resolved.

    For rls and dpp a non-positive ``alpha`` selects the ridge whose
    effective dimension equals ``k``. Spectra here only feed samplers, which
    need a PSD matrix, so round-off negatives are clipped instead of failing
    the positive-definiteness gate.
    """
    n = k_train.shape[0]
    if config.scheme == "uniform":
        return Sampler(config, n), config
    spectrum = eigendecompose(k_train, require_pd=False)
    if config.scheme in ("rls", "dpp") and not config.alpha > 0:
        config = replace(config, alpha=alpha_for_effective_dimension(spectrum, config.k))
    if config.scheme == "rls":
        return Sampler(config, n, scores=ridge_leverage_scores(spectrum, config.alpha)), config
    return Sampler(config, n, spectrum=spectrum), config


def _pmap(fn, items, threads):
    if threads <= 1:
        return [fn(i) for i in items]
    with ThreadPoolExecutor(threads) as pool:
        return list(pool.map(fn, items))


def _params(**kw):
    out = {}
    for key, v in kw.items():
        if isinstance(v, (np.integer,)):
            v = int(v)
        elif isinstance(v, (np.floating,)):
            v = float(v)
        elif isinstance(v, tuple):
            v = list(v)
        out[key] = v
    return out


def run_ensemble_krr(ds, split, spec: KernelSpec, sampler: SamplerConfig, m_list, repeats=10,
                     jitter=DEFAULT_EPSILON, threads=1, timings=False):
    """Ensembles of ridgeless regressors on the training fold, scored on bulk and tail.

    For each repeat, ``max(m_list)`` subsets are drawn once and the ensemble
    of size m uses the first m of them.
    """
    if ds.labels is None:
        raise DataError("ensemble KRR needs labels")
    m_list = sorted(set(int(m) for m in m_list))
    x_train = split.features[split.train_idx]
    y_train = ds.labels[split.train_idx]
    k_train = gram(x_train, spec)
    if sampler.scheme != "dpp" and sampler.k > k_train.shape[0]:
        raise ValueError(f"k={sampler.k} exceeds n_train={k_train.shape[0]}")
    smp, sampler = _make_sampler(sampler, k_train)
    bulk, tail = split.test_bulk_idx, split.test_tail_idx
    k_bulk = cross_kernel(split.features[bulk], x_train, spec) if bulk.size else None
    k_tail = cross_kernel(split.features[tail], x_train, spec) if tail.size else None
    m_max = m_list[-1]

    def one_repeat(rep):
        t0 = time.perf_counter()
        subsets = smp.draw_many(m_max, stream_key(sampler.seed, _STREAM_MEMBERS, rep))
        pb = np.zeros(bulk.size)
        pt = np.zeros(tail.size)
        seen = set()
        rows = []
        for i, s in enumerate(subsets, start=1):
            member = fit_ridgeless(k_train, y_train, s, jitter)
            if k_bulk is not None:
                pb += member.predict_from_kernel(k_bulk)
            if k_tail is not None:
                pt += member.predict_from_kernel(k_tail)
            seen.update(int(j) for j in s)
            if i in m_list:
                rows.append({
                    "scheme": sampler.scheme, "k": sampler.k, "m": i, "repeat": rep,
                    "smape_bulk": smape(ds.labels[bulk], pb / i) if bulk.size else None,
                    "smape_tail": smape(ds.labels[tail], pt / i) if tail.size else None,
                    "distinct_landmarks": len(seen),
                })
        if timings:
            for r in rows:
                r["wall_time"] = time.perf_counter() - t0
        return rows

    raw = [r for rows in _pmap(one_repeat, range(repeats), threads) for r in rows]
    records = []
    for m in m_list:
        rs = [r for r in raw if r["m"] == m]
        rec = {
            "scheme": sampler.scheme, "k": sampler.k, "m": m, "repeats": repeats,
            "smape_bulk": _quartiles(r["smape_bulk"] for r in rs),
            "smape_tail": _quartiles(r["smape_tail"] for r in rs),
            "distinct_landmarks": _quartiles(r["distinct_landmarks"] for r in rs),
            "frobenius_rel_error": None,
        }
        if timings:
            rec["wall_time"] = _quartiles(r["wall_time"] for r in rs)
        records.append(rec)
    params = _params(kernel=spec.family, sigma=spec.bandwidth, scheme=sampler.scheme, k=sampler.k,
                     alpha=sampler.alpha, seed=sampler.seed, m_list=m_list, repeats=repeats,
                     jitter=jitter, n_train=int(split.train_idx.size), n_bulk=int(bulk.size),
                     n_tail=int(tail.size), alpha_strat=split.alpha_strat,
                     rls_threshold=split.rls_threshold)
    return ExperimentReport("krr-ensemble", params, records, raw)


def run_ensemble_nystrom(ds, spec: KernelSpec, sampler: SamplerConfig, m_list, repeats=10,
                         epsilon=DEFAULT_EPSILON, threads=1, max_n=MAX_GRAM_N, timings=False):
    """Relative Frobenius error of equal-weight ensemble Nystrom approximations."""
    if ds.n > max_n:
        raise DataError(f"n={ds.n} exceeds the dense Gram cap {max_n}; use --subsample")
    m_list = sorted(set(int(m) for m in m_list))
    x, _, _ = standardize(ds.features)
    k = gram(x, spec)
    knorm = np.linalg.norm(k)
    smp, sampler = _make_sampler(sampler, k)
    m_max = m_list[-1]

    def one_repeat(rep):
        t0 = time.perf_counter()
        subsets = smp.draw_many(m_max, stream_key(sampler.seed, _STREAM_MEMBERS, rep))
        total = np.zeros_like(k)
        seen = set()
        rows = []
        for i, s in enumerate(subsets, start=1):
            total += nystrom(k, s, epsilon).matrix()
            seen.update(int(j) for j in s)
            if i in m_list:
                rows.append({
                    "scheme": sampler.scheme, "k": sampler.k, "m": i, "repeat": rep,
                    "frobenius_rel_error": float(np.linalg.norm(k - total / i) / knorm),
                    "distinct_landmarks": len(seen),
                })
        if timings:
            for r in rows:
                r["wall_time"] = time.perf_counter() - t0
        return rows

    raw = [r for rows in _pmap(one_repeat, range(repeats), threads) for r in rows]
    records = []
    for m in m_list:
        rs = [r for r in raw if r["m"] == m]
        rec = {
            "scheme": sampler.scheme, "k": sampler.k, "m": m, "repeats": repeats,
            "frobenius_rel_error": _quartiles(r["frobenius_rel_error"] for r in rs),
            "distinct_landmarks": _quartiles(r["distinct_landmarks"] for r in rs),
            "smape_bulk": None, "smape_tail": None,
        }
        if timings:
            rec["wall_time"] = _quartiles(r["wall_time"] for r in rs)
        records.append(rec)
    params = _params(kernel=spec.family, sigma=spec.bandwidth, scheme=sampler.scheme, k=sampler.k,
                     alpha=sampler.alpha, seed=sampler.seed, m_list=m_list, repeats=repeats,
                     epsilon=epsilon, n=ds.n)
    return ExperimentReport("nystrom", params, records, raw)


__all__ = [
    "Dataset", "ExperimentReport", "StratifiedSplit", "load_csv", "make_synthetic",
    "relative_frobenius_error", "run_ensemble_krr", "run_ensemble_nystrom", "smape",
    "split_and_stratify", "standardize", "subsample",
]
