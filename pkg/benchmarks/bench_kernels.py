"""Compiled vs numpy kernels: agreement and wall time.

    python benchmarks/bench_kernels.py [--repeat 5]

Prints one row per kernel and size with the best-of-``repeat`` time for each
backend, the speedup and the largest absolute difference between outputs.
"""
import argparse
import sys
import timeit

import numpy as np

from deid.kernels import available_backends
from deid.numerics import make_rng


def lstm_case(rng, n, d_in, d_h):
    X = rng.normal(size=(n, d_in))
    Wi = rng.normal(scale=0.2, size=(d_h, d_in + 2 * d_h))
    Wc = rng.normal(scale=0.2, size=(d_h, d_in + d_h))
    Wo = rng.normal(scale=0.2, size=(d_h, d_in + 2 * d_h))
    b = [rng.normal(scale=0.1, size=d_h) for _ in range(3)]
    dH = rng.normal(size=(n, d_h))
    return X, Wi, Wc, Wo, b, dH


def cases(rng):
    for n, d_in, d_h in ((20, 50, 25), (80, 150, 100), (300, 150, 100)):
        X, Wi, Wc, Wo, b, dH = lstm_case(rng, n, d_in, d_h)
        name = f"n={n} d_in={d_in} d_h={d_h}"

        def fwd(k, X=X, Wi=Wi, Wc=Wc, Wo=Wo, b=b):
            return k.lstm_forward(X, Wi, Wc, Wo, *b, False)

        def bwd(k, X=X, Wi=Wi, Wc=Wc, Wo=Wo, b=b, dH=dH):
            H, C, I, G, O = k.lstm_forward(X, Wi, Wc, Wo, *b, False)
            return k.lstm_backward(X, H, C, I, G, O, Wi, Wc, Wo, False, dH)

        yield "lstm_forward", name, fwd
        yield "lstm_forward+backward", name, bwd
    for n, k_lab in ((20, 9), (300, 29), (1000, 29)):
        A, T = rng.normal(size=(n, k_lab)), rng.normal(size=(k_lab, k_lab))
        name = f"n={n} k={k_lab}"
        yield "crf_forward_backward", name, lambda k, A=A, T=T: k.crf_forward_backward(A, T)
        yield "crf_viterbi", name, lambda k, A=A, T=T: k.crf_viterbi(A, T)


def max_diff(a, b):
    if isinstance(a, tuple):
        return max(max_diff(x, y) for x, y in zip(a, b))
    a, b = np.asarray(a, dtype=np.float64), np.asarray(b, dtype=np.float64)
    return float(np.max(np.abs(a - b))) if a.size else 0.0


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--number", type=int, default=20)
    args = ap.parse_args(argv)
    backends = available_backends()
    if "compiled" not in backends:
        print("compiled extension not built; only the numpy backend is available", file=sys.stderr)
    names = sorted(backends)
    print("kernel\tsize\t" + "\t".join(f"{b}_ms" for b in names) + "\tspeedup\tmax_abs_diff")
    for kernel, size, fn in cases(make_rng(0)):
        ms = {}
        for b in names:
            t = timeit.repeat(lambda: fn(backends[b]), repeat=args.repeat, number=args.number)
            ms[b] = 1000 * min(t) / args.number
        if len(names) == 2:
            speed = f"{ms['python'] / ms['compiled']:.1f}x"
            diff = f"{max_diff(fn(backends['python']), fn(backends['compiled'])):.1e}"
        else:
            speed = diff = "-"
        print(f"{kernel}\t{size}\t" + "\t".join(f"{ms[b]:.3f}" for b in names) + f"\t{speed}\t{diff}")


if __name__ == "__main__":
    main()
