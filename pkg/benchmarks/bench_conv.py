"""Compiled vs pure-numpy convolution kernels, plus one training step.

Usage: python benchmarks/bench_conv.py [--size 64] [--repeat 20]
"""
import argparse
import time

import numpy as np

from londn.kernels import _conv_py

try:
    from londn.kernels import _conv_ext
except ImportError:
    _conv_ext = None


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--size", type=int, default=64)
    ap.add_argument("--features", type=int, default=32)
    ap.add_argument("--repeat", type=int, default=20)
    args = ap.parse_args()

    backends = [("python", _conv_py)]
    if _conv_ext is not None:
        backends.insert(0, ("compiled", _conv_ext))
    else:
        print("compiled extension not built; timing the numpy kernels only")

    rng = np.random.default_rng(0)
    f, n = args.features, args.size
    print(f"{'layer':>10} {'backend':>9} {'forward ms':>11} {'backward ms':>12}")
    for cin, cout in [(2, f), (f, f), (f, 2)]:
        x = rng.standard_normal((cin, n, n))
        w = rng.standard_normal((cout, cin, 3, 3))
        b = rng.standard_normal(cout)
        g = rng.standard_normal((cout, n, n))
        for name, mod in backends:
            fwd = best_of(lambda: mod.conv2d_forward(x, w, b), args.repeat)
            bwd = best_of(lambda: mod.conv2d_backward(x, w, g), args.repeat)
            print(f"{cin:>4}->{cout:<5} {name:>9} {1e3 * fwd:>11.3f} {1e3 * bwd:>12.3f}")


if __name__ == "__main__":
    main()
