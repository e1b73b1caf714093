"""Time the compiled and numpy kernel backends on the temperature-sweep workload.

    python3 benchmarks/bench_kernels.py [--n 5000] [--k 10] [--repeat 5]

Each backend scores D2 and builds D3 masks for the full 41-point grid, which
is the inner loop of temperature selection, and the standalone row kernels.
"""
import argparse
import time

import numpy as np

from erconf import kernels
from erconf.core import RandomSource
from erconf.data import SynthSpec, generate_synthetic
from erconf.temperature import sweep_temperatures


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n", type=int, default=5000, help="rows in each of D2 and D3")
    ap.add_argument("--k", type=int, default=10)
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()

    data = generate_synthetic(SynthSpec(args.k, None, 2 * args.n, 3.5, 3.0, seed=0))
    ex = data.table.with_uniforms(RandomSource(0).child("u"))
    d2, d3 = ex.subset(slice(0, args.n)), ex.subset(slice(args.n, 2 * args.n))
    z, u, y = ex.logits, ex.u, ex.labels

    workloads = {
        "softmax_rows": lambda: kernels.softmax_rows(z),
        "entropy_rows": lambda: kernels.entropy_rows(z),
        "er_prob_rows": lambda: kernels.er_prob_rows(z, 0.7, 1e-10),
        "score_matrix(aps)": lambda: kernels.score_matrix(kernels.softmax_rows(z), u, kernels.APS, 0.0, 0),
        "label_scores(aps)": lambda: kernels.label_scores(kernels.softmax_rows(z), y, u, kernels.APS, 0.0, 0),
        "sweep (41 temps)": lambda: sweep_temperatures(d2, d3, 0.1, jobs=1),
    }
    backends = kernels.available_backends()
    prev = kernels.backend_name()
    results = {}
    for name in backends:
        kernels.set_backend(name)
        for label, fn in workloads.items():
            results[label, name] = best_of(fn, args.repeat)
    kernels.set_backend(prev)

    print(f"n={2 * args.n} rows, K={args.k}, best of {args.repeat}")
    head = f"{'workload':<20}" + "".join(f"{b:>12}" for b in backends)
    if len(backends) == 2:
        head += f"{'speedup':>10}"
    print(head)
    for label in workloads:
        line = f"{label:<20}" + "".join(f"{results[label, b] * 1e3:>10.2f}ms" for b in backends)
        if len(backends) == 2:
            line += f"{results[label, 'python'] / results[label, 'cython']:>9.1f}x"
        print(line)
    if "cython" not in backends:
        print("compiled backend not built; only the numpy path was timed")


if __name__ == "__main__":
    main()
