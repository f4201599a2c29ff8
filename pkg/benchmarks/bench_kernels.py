"""Compare the compiled and numpy kernel backends.

Usage::

    python benchmarks/bench_kernels.py [--repeat 20] [--scale 1]

Each kernel runs on the same random inputs under every available backend;
the table reports the median wall time and the speedup over numpy.
"""
import argparse
import time

import numpy as np
import scipy.sparse as sp

from sgat import kernels


def _csr(rng, n, m, deg):
    lengths = rng.integers(1, 2 * deg, n)
    indptr = np.concatenate([[0], np.cumsum(lengths)]).astype(np.int64)
    indices = rng.integers(0, m, int(indptr[-1])).astype(np.int64)
    return indptr, indices


def make_cases(rng, scale):
    n, heads, width = 5000 * scale, 8, 8
    indptr, indices = _csr(rng, n, n, 12)
    nnz = int(indptr[-1])
    w = rng.random((nnz, heads))
    X = rng.standard_normal((n, heads * width))
    G = rng.standard_normal((n, heads * width))
    scores = rng.standard_normal((nnz, heads))
    targets, hubs = 400 * scale, 300 * scale
    inc = sp.random(targets, hubs, density=0.03, random_state=0, format="csr")
    inc.data[:] = 1
    inc.sort_indices()
    inc_t = inc.T.tocsr()
    inc_t.sort_indices()
    pairs = (inc @ inc.T).tocoo()
    keep = pairs.row < pairs.col
    cands = np.stack([pairs.row[keep], pairs.col[keep]], axis=1).astype(np.int64)
    csr_args = tuple(a.astype(np.int64) for a in (inc.indptr, inc.indices, inc_t.indptr, inc_t.indices))
    return {
        "segment_max": lambda m: m.segment_max(scores, indptr),
        "segment_sum": lambda m: m.segment_sum(scores, indptr),
        "csr_spmm": lambda m: m.csr_spmm(indptr, indices, w, X),
        "csr_spmm_backward": lambda m: m.csr_spmm_backward(indptr, indices, w, X, G),
        "scatter_add_rows": lambda m: m.scatter_add_rows(X, indices[:n], n),
        "closure_sizes": lambda m: m.closure_sizes(cands, *csr_args, 1, 20),
    }


def bench(fn, repeat):
    fn()  # warm-up
    times = []
    for _ in range(repeat):
        start = time.perf_counter()
        fn()
        times.append(time.perf_counter() - start)
    return float(np.median(times))


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeat", type=int, default=20)
    parser.add_argument("--scale", type=int, default=1)
    args = parser.parse_args(argv)
    backends = kernels.backends()
    cases = make_cases(np.random.default_rng(0), args.scale)
    names = list(backends)
    print(f"{'kernel':20s}" + "".join(f"{n + ' ms':>14s}" for n in names) + f"{'speedup':>10s}")
    for case, fn in cases.items():
        ms = {n: 1e3 * bench(lambda: fn(mod), args.repeat) for n, mod in backends.items()}
        speed = ms["python"] / ms["cython"] if "cython" in ms else float("nan")
        print(f"{case:20s}" + "".join(f"{ms[n]:14.3f}" for n in names) + f"{speed:10.1f}x")


if __name__ == "__main__":
    main()
