"""Command-line interface.

Subcommands::

    dppens sample        draw landmark subsets
    dppens rls           ridge leverage scores of a dataset
    dppens nystrom       ensemble Nystrom error versus m
    dppens krr-ensemble  ensemble ridgeless regression, bulk/tail SMAPE versus m
    dppens verify        run an oracle suite

Exit codes: 0 success, 1 usage error, 2 data error, 3 verification failure,
4 numerical failure.
"""

import argparse
import csv
import io
import json
import math
import sys

import numpy as np

from . import oracle
from .bench import (
    DATASET_DEFAULTS,
    SCHEMA_VERSION,
    ExperimentReport,
    load_csv,
    make_synthetic,
    run_ensemble_krr,
    run_ensemble_nystrom,
    split_and_stratify,
    standardize,
    subsample,
)
from .errors import DataError, SamplingError
from .kernel_core import (
    KernelSpec,
    alpha_for_effective_dimension,
    eigendecompose,
    expected_dpp_size,
    gram,
    cross_kernel,
    ridge_leverage_scores,
)
from .samplers import Sampler, SamplerConfig, stream_key

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_VERIFY, EXIT_NUMERIC = 0, 1, 2, 3, 4
SCHEMES = ("uniform", "rls", "dpp", "kdpp")
SUITES = ("thm1", "cor4", "lemma2", "prop5", "remark", "eq2-mc", "sampler-laws")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _int_list(text):
    """``"1-5,10"`` -> [1, 2, 3, 4, 5, 10]."""
    out = []
    for part in str(text).split(","):
        part = part.strip()
        if not part:
            continue
        if "-" in part[1:]:
            a, b = part.split("-", 1)
            a, b = int(a), int(b)
            if b < a:
                raise argparse.ArgumentTypeError(f"empty range {part!r}")
            out.extend(range(a, b + 1))
        else:
            out.append(int(part))
    if not out:
        raise argparse.ArgumentTypeError("empty list")
    return out


def _float_list(text):
    out = [float(p) for p in str(text).split(",") if p.strip()]
    if not out:
        raise argparse.ArgumentTypeError("empty list")
    return out


def _name_list(text):
    return [p.strip() for p in str(text).split(",") if p.strip()]


def _schemes(text):
    names = _name_list(text)
    bad = [s for s in names if s not in SCHEMES]
    if bad or not names:
        raise argparse.ArgumentTypeError(f"unknown scheme(s) {bad}; choose from {SCHEMES}")
    return names


def _positive_int(text):
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError("must be at least 1")
    return v


def _delimiter(text):
    return {"tab": "\t", "\\t": "\t"}.get(text, text)


def _common(p):
    g = p.add_argument_group("common")
    g.add_argument("--seed", type=int, default=0, help="master seed")
    g.add_argument("--output", choices=("json", "csv"), default="json")
    g.add_argument("--out", help="write to this file instead of stdout")
    g.add_argument("--threads", type=_positive_int, default=1)
    g.add_argument("--config", help="flat key=value file; command-line flags take precedence")


def _data(p, labels=True):
    g = p.add_argument_group("data")
    g.add_argument("--data", help="CSV/TSV file with a header row")
    g.add_argument("--synthetic", type=_positive_int, metavar="N",
                   help="use N points of the built-in clustered regression data")
    g.add_argument("--data-seed", type=int, default=0, help="seed for synthetic data and --subsample")
    if labels:
        g.add_argument("--label-column")
    g.add_argument("--delimiter", type=_delimiter, default=",", help="field separator ('tab' for TSV)")
    g.add_argument("--one-hot", nargs="?", const="*", default=None, metavar="COLS",
                   help="one-hot encode these categorical columns (all if no list given)")
    g.add_argument("--ordinal", nargs="?", const="*", default=None, metavar="COLS",
                   help="rank-encode these categorical columns (all if no list given)")
    g.add_argument("--subsample", type=_positive_int, metavar="N")
    g.add_argument("--preset", choices=sorted(DATASET_DEFAULTS),
                   help="default sigma, k and lambda-rls for a known dataset")
    g.add_argument("--kernel", choices=("gaussian", "laplace"), default="gaussian")
    g.add_argument("--sigma", type=float, help="kernel bandwidth (default 1, or the preset's)")


def _sampling(p, multi):
    g = p.add_argument_group("sampling")
    if multi:
        g.add_argument("--schemes", type=_schemes, default=["uniform", "rls", "kdpp"])
    else:
        g.add_argument("--scheme", choices=SCHEMES, default="kdpp")
    g.add_argument("--k", type=_positive_int, help="subset size (default 10, or the preset's)")
    g.add_argument("--alpha", type=float, default=0.0,
                   help="ridge for rls/dpp; <= 0 picks the ridge with effective dimension k")
    g.add_argument("--lambda-rls", type=float,
                   help="rls ridge as a multiple of the number of sampled rows")


def _experiment(p):
    g = p.add_argument_group("experiment")
    g.add_argument("--m-list", type=_int_list, default=_int_list("1-20"), help="e.g. 1-20 or 1,5,10")
    g.add_argument("--repeats", type=_positive_int, default=10)
    g.add_argument("--timings", action="store_true", help="add wall_time (output is then not reproducible)")


def build_parser():
    parser = _Parser(prog="dppens", description="DPP landmark sampling and ensemble kernel regression.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("sample", help="draw landmark subsets")
    _common(p)
    _data(p, labels=False)
    _sampling(p, multi=False)
    p.add_argument("--draws", type=_positive_int, default=1)
    p.set_defaults(func=cmd_sample)

    p = sub.add_parser("rls", help="ridge leverage scores")
    _common(p)
    _data(p, labels=False)
    g = p.add_argument_group("scores")
    g.add_argument("--k", type=_positive_int, help="target effective dimension when --alpha <= 0")
    g.add_argument("--alpha", type=float, default=0.0)
    g.add_argument("--lambda-rls", type=float, help="ridge as a multiple of n")
    p.set_defaults(func=cmd_rls)

    p = sub.add_parser("nystrom", help="ensemble Nystrom approximation error")
    _common(p)
    _data(p, labels=False)
    _sampling(p, multi=True)
    _experiment(p)
    p.add_argument("--epsilon", type=float, default=1e-12)
    p.add_argument("--max-n", type=_positive_int, default=5000)
    p.set_defaults(func=cmd_nystrom)

    p = sub.add_parser("krr-ensemble", help="ensemble ridgeless regression with bulk/tail SMAPE")
    _common(p)
    _data(p, labels=True)
    _sampling(p, multi=True)
    _experiment(p)
    p.add_argument("--train-fraction", type=float, default=0.5)
    p.add_argument("--split-seed", type=int, help="seed for the train/test split (default --seed)")
    p.add_argument("--jitter", type=float, default=1e-12)
    p.set_defaults(func=cmd_krr)

    p = sub.add_parser("verify", help="run an oracle suite")
    _common(p)
    p.add_argument("suite", choices=SUITES)
    p.add_argument("--n", type=_int_list, help="matrix sizes")
    p.add_argument("--k", type=_int_list, help="subset sizes (default all valid)")
    p.add_argument("--alpha", type=_float_list, help="ridges")
    p.add_argument("--seeds", type=_positive_int, default=5, help="random instances per grid point")
    p.add_argument("--vectors", type=_positive_int, default=100,
                   help="random vectors for the scalar inequalities")
    p.add_argument("--draws", type=_positive_int, help="Monte Carlo draws")
    p.add_argument("--test-points", type=_positive_int, default=10)
    p.add_argument("--jitter", type=float, default=0.0)
    p.set_defaults(func=cmd_verify)
    return parser, sub


# -- config files -----------------------------------------------------------

def read_config(path):
    """Flat ``key = value`` pairs; ``#`` starts a comment. Keys may use - or _."""
    out = {}
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise UsageError(f"{path}:{lineno}: expected key = value")
            key, value = (s.strip() for s in line.split("=", 1))
            out[key.replace("-", "_")] = value
    return out


def _apply_config(subparser, values, path):
    actions = {a.dest: a for a in subparser._actions}
    defaults = {}
    for key, raw in values.items():
        a = actions.get(key)
        if a is None or key in ("help", "config", "func"):
            raise UsageError(f"{path}: unknown key {key!r}")
        if isinstance(a, argparse._StoreTrueAction):
            if raw.lower() not in ("true", "false", "1", "0", "yes", "no"):
                raise UsageError(f"{path}: {key} must be true or false")
            defaults[key] = raw.lower() in ("true", "1", "yes")
            continue
        try:
            v = a.type(raw) if a.type else raw
        except (argparse.ArgumentTypeError, ValueError) as e:
            raise UsageError(f"{path}: bad value for {key}: {e}") from None
        if a.choices is not None and v not in a.choices:
            raise UsageError(f"{path}: {key} must be one of {list(a.choices)}")
        defaults[key] = v
    subparser.set_defaults(**defaults)


def parse_args(argv):
    parser, sub = build_parser()
    args = parser.parse_args(argv)
    if getattr(args, "config", None):
        try:
            values = read_config(args.config)
        except OSError as e:
            raise DataError(f"cannot read config: {e}") from None
        _apply_config(sub.choices[args.command], values, args.config)
        args = parser.parse_args(argv)
    return args


# -- helpers ------------------------------------------------------------------

def _columns(spec):
    if spec is None:
        return False
    return True if spec == "*" else _name_list(spec)


def load_dataset(args, need_labels=False):
    if (args.data is None) == (args.synthetic is None):
        raise UsageError("give exactly one of --data or --synthetic")
    if args.synthetic is not None:
        ds = make_synthetic(args.synthetic, seed=args.data_seed)
    else:
        label = getattr(args, "label_column", None)
        if need_labels and label is None:
            raise UsageError("--label-column is required with --data")
        try:
            ds = load_csv(args.data, label, args.delimiter,
                          one_hot=_columns(args.one_hot), ordinal=_columns(args.ordinal))
        except OSError as e:
            raise DataError(str(e)) from None
    return subsample(ds, args.subsample, args.data_seed)


def _resolve_defaults(args):
    preset = DATASET_DEFAULTS.get(args.preset) if getattr(args, "preset", None) else None
    if args.sigma is None:
        args.sigma = preset[0] if preset else 1.0
    if getattr(args, "k", None) is None:
        args.k = preset[1] if preset else 10
    if getattr(args, "lambda_rls", None) is None and preset:
        args.lambda_rls = preset[2]
    if not (args.sigma > 0 and math.isfinite(args.sigma)):
        raise UsageError("--sigma must be positive")


def _kernel(args):
    return KernelSpec(args.kernel, args.sigma)


def _sampler_config(args, scheme, n_rows):
    alpha = args.alpha
    if scheme == "rls" and args.lambda_rls is not None:
        alpha = args.lambda_rls * n_rows
    return SamplerConfig(scheme, k=args.k, alpha=alpha, seed=args.seed)


def _dumps(doc):
    return json.dumps(doc, indent=2, sort_keys=True) + "\n"


def _rows_csv(rows):
    if not rows:
        return ""
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=list(rows[0]), lineterminator="\n")
    w.writeheader()
    for r in rows:
        w.writerow({c: repr(v) if isinstance(v, float) else ("" if v is None else v) for c, v in r.items()})
    return buf.getvalue()


def combine_reports(reports):
    """One report from several single-scheme runs of the same experiment."""
    kind = reports[0].kind
    params = {"runs": [r.params for r in reports]}
    records = [rec for r in reports for rec in r.records]
    raw = [row for r in reports for row in r.raw]
    return ExperimentReport(kind, params, records, raw)


# -- commands -----------------------------------------------------------------

def cmd_sample(args):
    _resolve_defaults(args)
    ds = load_dataset(args)
    x, _, _ = standardize(ds.features)
    k = gram(x, _kernel(args))
    cfg = _sampler_config(args, args.scheme, ds.n)
    spectrum = None if cfg.scheme == "uniform" else eigendecompose(k, require_pd=False)
    if cfg.scheme in ("rls", "dpp") and not cfg.alpha > 0:
        cfg = SamplerConfig(cfg.scheme, k=cfg.k, alpha=alpha_for_effective_dimension(spectrum, cfg.k),
                            seed=cfg.seed)
    scores = ridge_leverage_scores(spectrum, cfg.alpha) if cfg.scheme == "rls" else None
    smp = Sampler(cfg, ds.n, spectrum=spectrum, scores=scores)
    subsets = smp.draw_many(args.draws, stream_key(cfg.seed, 3), threads=args.threads)
    if args.output == "csv":
        return _rows_csv([{"draw": i, "index": int(j)} for i, s in enumerate(subsets) for j in s]), EXIT_OK
    doc = {"schema_version": SCHEMA_VERSION, "kind": "sample",
           "params": {"scheme": cfg.scheme, "k": cfg.k, "alpha": float(cfg.alpha), "seed": cfg.seed,
                      "kernel": args.kernel, "sigma": args.sigma, "n": ds.n, "draws": args.draws},
           "subsets": [[int(j) for j in s] for s in subsets]}
    return _dumps(doc), EXIT_OK


def cmd_rls(args):
    _resolve_defaults(args)
    ds = load_dataset(args)
    x, _, _ = standardize(ds.features)
    spectrum = eigendecompose(gram(x, _kernel(args)), require_pd=False)
    if args.lambda_rls is not None:
        alpha = args.lambda_rls * ds.n
    elif args.alpha > 0:
        alpha = args.alpha
    else:
        alpha = alpha_for_effective_dimension(spectrum, args.k)
    scores = ridge_leverage_scores(spectrum, alpha)
    if args.output == "csv":
        return _rows_csv([{"index": i, "score": float(s)} for i, s in enumerate(scores)]), EXIT_OK
    doc = {"schema_version": SCHEMA_VERSION, "kind": "rls",
           "params": {"alpha": float(alpha), "kernel": args.kernel, "sigma": args.sigma, "n": ds.n},
           "effective_dimension": float(expected_dpp_size(spectrum, alpha)),
           "scores": [float(s) for s in scores]}
    return _dumps(doc), EXIT_OK


def _report_output(args, report):
    return (report.to_csv() if args.output == "csv" else report.to_json()), EXIT_OK


def cmd_nystrom(args):
    _resolve_defaults(args)
    ds = load_dataset(args)
    spec = _kernel(args)
    reports = [run_ensemble_nystrom(ds, spec, _sampler_config(args, s, ds.n), args.m_list,
                                    repeats=args.repeats, epsilon=args.epsilon, threads=args.threads,
                                    max_n=args.max_n, timings=args.timings)
               for s in args.schemes]
    return _report_output(args, combine_reports(reports))


def cmd_krr(args):
    _resolve_defaults(args)
    ds = load_dataset(args, need_labels=True)
    spec = _kernel(args)
    split_seed = args.seed if args.split_seed is None else args.split_seed
    split = split_and_stratify(ds, spec, args.train_fraction, seed=split_seed)
    n_train = split.train_idx.size
    reports = [run_ensemble_krr(ds, split, spec, _sampler_config(args, s, n_train), args.m_list,
                                repeats=args.repeats, jitter=args.jitter, threads=args.threads,
                                timings=args.timings)
               for s in args.schemes]
    return _report_output(args, combine_reports(reports))


# -- verify -------------------------------------------------------------------

_SUITE_TAGS = {name: i for i, name in enumerate(SUITES)}


def _instance_rng(seed, suite, *tags):
    ss = np.random.SeedSequence(int(seed), spawn_key=(_SUITE_TAGS[suite], *(int(t) for t in tags)))
    return np.random.default_rng(ss)


def _ks(args, n):
    return [k for k in (args.k or range(1, n + 1)) if 1 <= k <= n]


def _matrix_instances(args, suite, default_n):
    for n in args.n or default_n:
        for i in range(args.seeds):
            yield n, i, oracle.random_pd_matrix(n, _instance_rng(args.seed, suite, n, i))


def _entry(report, instance):
    return report, instance


def suite_thm1(args):
    for n, i, k in _matrix_instances(args, "thm1", range(2, 9)):
        for a in args.alpha or (0.01, 1.0, 100.0):
            yield _entry(oracle.expect_dpp_exhaustive(k, a), {"n": n, "instance": i, "alpha": a, "K": k})


def suite_cor4(args):
    for n, i, k in _matrix_instances(args, "cor4", range(2, 9)):
        for kk in _ks(args, n):
            yield _entry(oracle.expect_kdpp_exhaustive(k, kk), {"n": n, "instance": i, "k": kk, "K": k})


def suite_lemma2(args):
    for n in args.n or range(3, 7):
        for i in range(args.seeds):
            rng = _instance_rng(args.seed, "lemma2", n, i)
            k = oracle.random_pd_matrix(n, rng)
            u = rng.standard_normal(n)
            w = rng.standard_normal(n)
            for kk in _ks(args, n):
                yield _entry(oracle.lemma2_check(k, kk, u, w),
                             {"n": n, "instance": i, "k": kk, "K": k, "u": u, "w": w})


def suite_prop5(args):
    for n, i, k in _matrix_instances(args, "prop5", range(2, 9)):
        for kk in _ks(args, n):
            yield _entry(oracle.prop5_bound_check(k, kk), {"n": n, "instance": i, "k": kk, "K": k})
    for i in range(args.vectors):
        rng = _instance_rng(args.seed, "prop5", 10_000, i)
        s = np.sort(rng.exponential(size=10) * 10.0 ** rng.uniform(-3, 3, size=10))[::-1]
        for kk in range(1, s.size):
            yield _entry(oracle.lemma6_check(s, kk, kk), {"instance": i, "k": kk, "l": kk, "sigma": s})


def suite_remark(args):
    for i in range(args.vectors):
        rng = _instance_rng(args.seed, "remark", i)
        lam = np.sort(10.0 ** rng.uniform(-4, 2, size=10))[::-1]
        for kk in range(1, lam.size + 1):
            yield _entry(oracle.remark_bound_check(lam, kk), {"instance": i, "k": kk, "lambdas": lam})
    for c in (1e-3, 1.0, 7.5, 1e3):
        lam = np.full(10, c)
        for kk in range(1, lam.size + 1):
            r = oracle.remark_bound_check(lam, kk)
            err = abs(r.lhs - r.rhs) / max(abs(r.rhs), 1e-300) if r.rhs else abs(r.lhs)
            r.extra["equality_error"] = err
            r.extra["passed"] = err <= 1e-10
            r.name = "remark-equality"
            yield _entry(r, {"constant": c, "k": kk, "lambdas": lam})


def eq2_problem(n=20, n_test=10, seed=0, sigma=1.0):
    """Kernel blocks and labels for the Monte Carlo check: n training and n_test test points."""
    ds = make_synthetic(n + n_test, seed=seed)
    train = np.arange(n)
    x, _, _ = standardize(ds.features, train)
    spec = KernelSpec("gaussian", sigma)
    return gram(x[:n], spec), ds.labels[:n], cross_kernel(x[n:], x[:n], spec)


def mc_trend_ok(checkpoints, z=4.0):
    """Deviation falls across checkpoints up to ``z`` standard errors, and ends below where it began."""
    if len(checkpoints) < 2:
        return True
    steps = all(b["rms_deviation"] <= a["rms_deviation"] + z * b["rms_standard_error"]
                for a, b in zip(checkpoints, checkpoints[1:]))
    return steps and checkpoints[-1]["rms_deviation"] <= checkpoints[0]["rms_deviation"]


def suite_eq2(args):
    n = (args.n or [20])[0]
    draws = args.draws or 100_000
    checkpoints = [c for c in (10 ** p for p in range(3, 12)) if c <= draws]
    for a in args.alpha or (1.0,):
        k, y, k_test = eq2_problem(n, args.test_points, args.seed)
        r = oracle.expectation_mc(k, y, a, draws, k_test, seed=args.seed, threads=args.threads,
                                  jitter=args.jitter, checkpoints=checkpoints)
        trend = mc_trend_ok(r.extra["checkpoints"])
        r.extra["trend_ok"] = trend
        r.extra["passed"] = r.extra["passed"] and trend
        yield _entry(r, {"n": n, "alpha": a, "draws": draws, "K": k, "y": y})


def suite_sampler_laws(args):
    n = (args.n or [6])[0]
    draws = args.draws or 200_000
    k = oracle.random_pd_matrix(n, _instance_rng(args.seed, "sampler-laws", n))
    for kk in args.k or [min(3, n)]:
        yield _entry(oracle.sampler_law_check(k, "kdpp", k=kk, draws=draws, seed=args.seed,
                                              threads=args.threads), {"n": n, "k": kk, "K": k})
    for a in args.alpha or (1.0,):
        yield _entry(oracle.sampler_law_check(k, "dpp", alpha=a, draws=draws, seed=args.seed,
                                              threads=args.threads), {"n": n, "alpha": a, "K": k})


_SUITES = {"thm1": suite_thm1, "cor4": suite_cor4, "lemma2": suite_lemma2, "prop5": suite_prop5,
           "remark": suite_remark, "eq2-mc": suite_eq2, "sampler-laws": suite_sampler_laws}


def _jsonable(v):
    if isinstance(v, np.ndarray):
        return v.tolist()
    if isinstance(v, (np.floating, np.integer)):
        return v.item()
    return v


def _severity(report):
    tol = report.tolerance or 1.0
    return report.rel_error / tol


def run_verify(args):
    """Run a suite; returns the JSON-ready document."""
    entries = list(_SUITES[args.suite](args))
    rows = []
    worst = None
    for report, instance in entries:
        d = {k: _jsonable(v) for k, v in report.to_dict().items()}
        d.update({k: _jsonable(v) for k, v in instance.items() if k not in ("K", "u", "w", "y", "sigma", "lambdas")})
        rows.append(d)
        if not report.passed and (worst is None or _severity(report) > _severity(worst[0])):
            worst = (report, instance)
    doc = {"schema_version": SCHEMA_VERSION, "kind": "verify", "suite": args.suite, "seed": args.seed,
           "passed": worst is None, "count": len(rows), "reports": rows, "worst": None}
    if worst is not None:
        report, instance = worst
        doc["worst"] = {"report": {k: _jsonable(v) for k, v in report.to_dict().items()},
                        "instance": {k: _jsonable(v) for k, v in instance.items()},
                        "seed": args.seed}
    return doc


def cmd_verify(args):
    if args.n and any(n < 1 for n in args.n):
        raise UsageError("--n must be positive")
    doc = run_verify(args)
    code = EXIT_OK if doc["passed"] else EXIT_VERIFY
    if args.output == "csv":
        cols = ("name", "passed", "abs_error", "rel_error", "tolerance")
        rows = [{c: r.get(c) for c in cols} for r in doc["reports"]]
        return _rows_csv(rows), code
    return _dumps(doc), code


# -- entry point ----------------------------------------------------------------

def main(argv=None):
    try:
        args = parse_args(argv)
        with np.errstate(over="raise", invalid="raise", divide="ignore", under="ignore"):
            text, code = args.func(args)
    except UsageError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except DataError as e:
        print(f"data error: {e}", file=sys.stderr)
        return EXIT_DATA
    except (np.linalg.LinAlgError, SamplingError, FloatingPointError) as e:
        print(f"numerical error: {e}", file=sys.stderr)
        return EXIT_NUMERIC
    except ValueError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE
    if args.out:
        with open(args.out, "w", newline="") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    return code


if __name__ == "__main__":
    sys.exit(main())
