"""Check the desk-scale trend conditions over many data/split/member seeds.

For each seed pair this prints which of the conditions hold:

  a     ensemble Nystrom median error at m=10 <= m=1 (rls and kdpp)
  b     kdpp median tail SMAPE <= uniform at m=10
  c     |median(20) - median(15)| <= 0.2 (median(1) - median(5)) for every
        scheme, bulk and tail
  nys1  kdpp median Nystrom error <= uniform at m=1

Usage: python3 scripts/trend_sweep.py --data-seeds 0-5 --sampler-seeds 0-2
"""

import argparse

from dppens.bench import make_synthetic, run_ensemble_krr, run_ensemble_nystrom, split_and_stratify
from dppens.cli import _int_list
from dppens.kernel_core import KernelSpec
from dppens.samplers import SamplerConfig

SCHEMES = ("uniform", "rls", "kdpp")


def conditions(data_seed, sampler_seed, n=500, k=25, sigma=1.0, repeats=10):
    spec = KernelSpec("gaussian", sigma)
    ds = make_synthetic(n, seed=data_seed)
    split = split_and_stratify(ds, spec, 0.5, seed=data_seed)
    krr, fro = {}, {}
    for s in SCHEMES:
        cfg = SamplerConfig(s, k=k, alpha=0.0, seed=sampler_seed)
        krr[s] = run_ensemble_krr(ds, split, spec, cfg, range(1, 21), repeats=repeats)
        r = run_ensemble_nystrom(ds, spec, cfg, [1, 10], repeats=repeats)
        fro[s] = [r.record(s, m)["frobenius_rel_error"]["q50"] for m in (1, 10)]

    def q(s, m, key):
        return krr[s].record(s, m)[key]["q50"]

    flat = [abs(q(s, 20, key) - q(s, 15, key)) <= 0.2 * (q(s, 1, key) - q(s, 5, key))
            for s in SCHEMES for key in ("smape_bulk", "smape_tail")]
    return {
        "a": fro["rls"][1] <= fro["rls"][0] and fro["kdpp"][1] <= fro["kdpp"][0],
        "b": q("kdpp", 10, "smape_tail") <= q("uniform", 10, "smape_tail"),
        "c": all(flat),
        "nys1": fro["kdpp"][0] <= fro["uniform"][0],
    }


def main():
    p = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    p.add_argument("--data-seeds", type=_int_list, default=_int_list("0-5"))
    p.add_argument("--sampler-seeds", type=_int_list, default=_int_list("0-2"))
    p.add_argument("--n", type=int, default=500)
    p.add_argument("--k", type=int, default=25)
    p.add_argument("--sigma", type=float, default=1.0)
    args = p.parse_args()
    totals = {}
    runs = 0
    for d in args.data_seeds:
        for s in args.sampler_seeds:
            res = conditions(d, s, args.n, args.k, args.sigma)
            runs += 1
            for key, v in res.items():
                totals[key] = totals.get(key, 0) + v
            marks = " ".join(f"{key}={'ok' if v else 'FAIL'}" for key, v in res.items())
            print(f"data_seed={d} sampler_seed={s}  {marks}", flush=True)
    print("pass rate: " + ", ".join(f"{key} {v}/{runs}" for key, v in totals.items()))


if __name__ == "__main__":
    main()
