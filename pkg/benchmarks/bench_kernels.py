"""Time the compiled graph kernels against the pure-Python fallback.

    python benchmarks/bench_kernels.py --sizes 200,500,1000 --repeat 3

Both backends run on the same synthetic graphs; the script also checks that
their outputs agree before reporting timings.
"""

import argparse
import time

import numpy as np

from ea_active import _pykernels
from ea_active.kg import SyntheticParams, generate_synthetic_pair

try:
    from ea_active import _ckernels
except ImportError:  # extension not built
    _ckernels = None


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        times.append(time.perf_counter() - t0)
    return min(times), out


def csr_of(n_core, seed):
    pair, _ = generate_synthetic_pair(SyntheticParams(n_core=n_core, n_exclusive_left=n_core // 4, n_exclusive_right=0, seed=seed))
    adj = pair.left.adjacency()
    return adj.indptr.astype(np.int64), adj.indices.astype(np.int64)


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--sizes", default="200,500,1000", help="comma-separated core entity counts")
    parser.add_argument("--repeat", type=int, default=3)
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args(argv)
    if _ckernels is None:
        parser.exit(1, "compiled kernels are not built; run `pip install -e . --no-build-isolation` first\n")

    print(f"{'nodes':>6} {'kernel':<12} {'python s':>10} {'cython s':>10} {'speedup':>8}")
    for size in (int(s) for s in args.sizes.split(",")):
        indptr, indices = csr_of(size, args.seed)
        n = len(indptr) - 1
        initial = np.diff(indptr).astype(np.int64)
        kernels = {
            "betweenness": lambda m: m.brandes_betweenness(indptr, indices),
            "avc": lambda m: m.avc_order(indptr, indices, initial),
        }
        for name, call in kernels.items():
            t_py, out_py = best_of(lambda: call(_pykernels), args.repeat)
            t_c, out_c = best_of(lambda: call(_ckernels), args.repeat)
            if name == "betweenness":
                assert np.allclose(out_py, out_c, rtol=0, atol=1e-9), "backends disagree"
            else:
                assert all(np.array_equal(a, b) for a, b in zip(out_py, out_c)), "backends disagree"
            print(f"{n:>6} {name:<12} {t_py:>10.4f} {t_c:>10.4f} {t_py / t_c:>7.1f}x")


if __name__ == "__main__":
    main()
