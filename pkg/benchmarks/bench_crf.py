"""Time the compiled CRF kernels against the numpy fallback.

    python3 benchmarks/bench_crf.py [--repeat 20]
"""
import argparse
import timeit

import numpy as np

from attrner.crf import backend

SIZES = [(8, 5), (32, 5), (128, 9), (512, 9), (512, 25)]


def bench(name, n, k, repeat, rng):
    impl = backend.BACKENDS[name]
    e = rng.normal(size=(n, k))
    trans, start, end = rng.normal(size=(k, k)), rng.normal(size=k), rng.normal(size=k)

    def fb():
        a, b, z = impl.forward_backward(e, trans, start, end)
        impl.transition_expectations(e, trans, a, b, z)

    def vit():
        impl.viterbi(e, trans, start, end)

    out = {}
    for label, fn in (("forward-backward", fb), ("viterbi", vit)):
        number = max(1, 2000 // n)
        best = min(timeit.repeat(fn, number=number, repeat=repeat)) / number
        out[label] = best * 1e6
    return out


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeat", type=int, default=5)
    args = parser.parse_args(argv)
    rng = np.random.default_rng(0)
    names = sorted(backend.BACKENDS)
    if "cython" not in names:
        print("compiled kernels not built; only the numpy backend is available")
    print(f"{'n':>5} {'K':>3} {'kernel':>17} " + " ".join(f"{n + ' (us)':>14}" for n in names)
          + ("   speedup" if len(names) == 2 else ""))
    for n, k in SIZES:
        res = {name: bench(name, n, k, args.repeat, rng) for name in names}
        for kernel in ("forward-backward", "viterbi"):
            row = f"{n:>5} {k:>3} {kernel:>17} " + " ".join(f"{res[m][kernel]:>14.1f}" for m in names)
            if len(names) == 2:
                row += f"   {res['python'][kernel] / res['cython'][kernel]:>6.1f}x"
            print(row)


if __name__ == "__main__":
    main()
