"""Time the compiled kernels against the pure-Python reference.

    python3 benchmarks/bench_kernels.py [--n 2000] [--repeat 5]
"""
import argparse
import timeit

import numpy as np

from bayesvit import kernels
from bayesvit.numerics import log_gamma
from bayesvit.model import path_stats


def _inputs(n, K, seed=0):
    g = np.random.default_rng(seed)
    log_init = np.log(g.dirichlet(np.ones(K)))
    log_trans = np.ascontiguousarray(np.log(g.dirichlet(np.ones(K), size=K)))
    log_emit = np.ascontiguousarray(g.normal(size=(n, K)))
    return log_init, log_trans, log_emit, g


def cases(n, K):
    li, lt, le, g = _inputs(n, K)
    u = g.random(n)
    alpha = np.ascontiguousarray(g.uniform(0.5, 5.0, size=(K, K)))
    obs = g.normal(size=n)
    path0 = g.integers(0, K, size=n).astype(np.int64)

    def icm():
        y = path0.copy()
        st = path_stats(y, obs, K)
        k.icm_sweep(y, np.ascontiguousarray(st.counts), li, alpha, log_gamma(alpha),
                    alpha.sum(axis=1), log_gamma(alpha.sum(axis=1)), le, obs, None,
                    st.m.astype(float), st.sums.copy(), st.sumsq.copy(), 1e-9)

    k = None
    table = {
        "viterbi": lambda: k.viterbi(li, lt, le),
        "forward_backward": lambda: k.forward_backward(li, lt, le),
        "backward_sample": lambda: k.backward_sample(li, lt, le, u),
        "icm_sweep": icm,
    }

    def bind(backend):
        nonlocal k
        k = kernels.get_backend(backend)
    return table, bind


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n", type=int, default=2000)
    ap.add_argument("--K", type=int, default=4)
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args(argv)
    # reference first so the ratio reads as a speedup
    backends = sorted(kernels.available_backends(), key=lambda b: b != "python")
    table, bind = cases(args.n, args.K)
    if len(backends) == 1:
        print("compiled backend not built; timing the reference only")
    print(f"n={args.n} K={args.K}, best of {args.repeat}, milliseconds")
    print(f"{'kernel':<18}" + "".join(f"{b:>12}" for b in backends) + "     speedup")
    for name, fn in table.items():
        times = []
        for b in backends:
            bind(b)
            fn()
            times.append(min(timeit.repeat(fn, number=1, repeat=args.repeat)) * 1e3)
        ratio = f"{times[0] / times[-1]:10.1f}x" if len(times) > 1 else "         -"
        print(f"{name:<18}" + "".join(f"{t:12.2f}" for t in times) + ratio)


if __name__ == "__main__":
    main()
