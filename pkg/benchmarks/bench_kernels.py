"""Time the compiled and pure-Python kernels on representative inputs.

Usage: python benchmarks/bench_kernels.py [--repeat N]
"""
import argparse
import timeit

import numpy as np

from dpcr import _pykernels
from dpcr.arima import _simplex, _start_values

try:
    from dpcr import _ckernels
except ImportError:
    _ckernels = None


def cases():
    rng = np.random.default_rng(0)
    w = rng.standard_normal(60)
    y = np.log(np.geomspace(1e-4, 0.5, 101)) + 0.05 * rng.standard_normal(101)
    wt = np.full(101, 50.0)
    for p, q in ((1, 1), (3, 2), (5, 5)):
        x0 = _start_values(w, p, q, True)
        yield (f"arma_negloglik p={p} q={q} n=60",
               lambda k, x0=x0, p=p, q=q: k.arma_negloglik(x0, w, p, q, True))
        sim = _simplex(x0)
        maxiter = 400 * (p + q + 2)
        yield (f"fit_arma p={p} q={q} n=60",
               lambda k, sim=sim, p=p, q=q, m=maxiter: k.fit_arma(sim, w, p, q, True, 1e-8, 1e-8, m))
    for lam in (0.01, 1.0):
        yield (f"l1_trend_filter p=101 lam={lam}",
               lambda k, lam=lam: k.l1_trend_filter(y, wt, lam, 1.0, 1e-8, 500))


def best_time(fn, repeat):
    number = 1
    while timeit.timeit(fn, number=number) < 0.05:
        number *= 2
    return min(timeit.repeat(fn, number=number, repeat=repeat)) / number


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args(argv)
    if _ckernels is None:
        print("compiled extension not built; run `pip install -e . --no-build-isolation`")
    print(f"{'kernel':40s} {'cython':>12s} {'python':>12s} {'speed-up':>9s}")
    for name, call in cases():
        tp = best_time(lambda: call(_pykernels), args.repeat)
        if _ckernels is None:
            print(f"{name:40s} {'-':>12s} {tp * 1e3:10.3f}ms {'-':>9s}")
            continue
        tc = best_time(lambda: call(_ckernels), args.repeat)
        print(f"{name:40s} {tc * 1e3:10.3f}ms {tp * 1e3:10.3f}ms {tp / tc:8.1f}x")


if __name__ == "__main__":
    main()
