#!/usr/bin/env python3
"""Benchmark the numba-jitted topology kernels against the plain-Python path.

The jitted functions expose the undecorated code as ``.py_func``, so both
paths run the exact same statements.  Typical output on a laptop shows a
50-300x speedup for the shortest-path kernels at connectome sizes.

Usage:
    python3 benchmarks/bench_topology.py [--rois 35] [--graphs 20]

Set CONNECTOGEN_DISABLE_NUMBA=1 before importing to benchmark a build where
the fallback path is the only path.
"""

import argparse
import time

import numpy as np

from connectogen import _topology_kernels as kernels
from connectogen._jit import JIT_ACTIVE


def random_graphs(count, r, seed=0):
    rng = np.random.default_rng(seed)
    graphs = []
    for _ in range(count):
        w = rng.uniform(0.1, 1.0, size=(r, r))
        w = np.triu(w * (rng.uniform(size=(r, r)) < 0.7), k=1)
        graphs.append(w + w.T)
    return graphs


def lengths_of(w):
    lengths = np.full(w.shape, np.inf)
    lengths[w > 0] = w[w > 0]
    np.fill_diagonal(lengths, 0.0)
    return lengths


def time_fn(fn, args, repeats=3):
    best = np.inf
    for _ in range(repeats):
        t0 = time.perf_counter()
        for arg in args:
            fn(arg)
        best = min(best, time.perf_counter() - t0)
    return best


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--rois", type=int, default=35)
    parser.add_argument("--graphs", type=int, default=20)
    args = parser.parse_args()

    graphs = random_graphs(args.graphs, args.rois)
    lengths = [lengths_of(w) for w in graphs]

    cases = [
        ("dijkstra_all", kernels.dijkstra_all, lengths),
        ("brandes_betweenness", kernels.brandes_betweenness, lengths),
        ("burt_effective_size", kernels.burt_effective_size, graphs),
        ("onnela_clustering", kernels.onnela_clustering, graphs),
    ]

    print(f"numba active: {JIT_ACTIVE}; {args.graphs} graphs, r={args.rois}")
    print(f"{'kernel':<22}{'jitted':>12}{'plain':>12}{'speedup':>10}")
    for name, fn, data in cases:
        plain = getattr(fn, "py_func", None)
        if plain is None:
            t = time_fn(fn, data)
            print(f"{name:<22}{'-':>12}{t:>11.3f}s{'-':>10}")
            continue
        fn(data[0])  # trigger compilation outside the timed region
        t_jit = time_fn(fn, data)
        t_plain = time_fn(plain, data)
        print(f"{name:<22}{t_jit:>11.4f}s{t_plain:>11.3f}s{t_plain / t_jit:>9.1f}x")


if __name__ == "__main__":
    main()
