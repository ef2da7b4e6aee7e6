"""Compare the compiled and pure-Python reachability indexes.

    python3 benchmarks/bench_kernels.py [--width 40] [--depth 60] [--repeat 5]
"""
from __future__ import annotations

import argparse
import random
import time

from dagcast import _pycore

try:
    from dagcast import _core
except ImportError:
    _core = None


def layered(width: int, depth: int, fanin: int, seed: int = 0):
    rng = random.Random(seed)
    layers = [[(0, i) for i in range(width)]]
    edges = {v: () for v in layers[0]}
    for r in range(1, depth):
        layer = [(r, i) for i in range(width)]
        for v in layer:
            edges[v] = tuple(rng.sample(layers[-1], fanin))
        layers.append(layer)
    return layers, edges


def bench(cls, layers, edges, queries, repeat):
    best_build = best_query = float("inf")
    for _ in range(repeat):
        t = time.perf_counter()
        idx = cls()
        for layer in layers:
            for v in layer:
                idx.add(v, edges[v])
        best_build = min(best_build, time.perf_counter() - t)
        t = time.perf_counter()
        for src, dst in queries:
            idx.reaches(src, dst)
        idx.closure([v for v in layers[-1]])
        best_query = min(best_query, time.perf_counter() - t)
    return best_build, best_query


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--width", type=int, default=40)
    ap.add_argument("--depth", type=int, default=60)
    ap.add_argument("--fanin", type=int, default=27)
    ap.add_argument("--queries", type=int, default=2000)
    ap.add_argument("--repeat", type=int, default=5)
    a = ap.parse_args()
    layers, edges = layered(a.width, a.depth, a.fanin)
    rng = random.Random(1)
    flat = [v for layer in layers for v in layer]
    queries = [(rng.choice(layers[-1]), rng.choice(flat)) for _ in range(a.queries)]
    print(f"vertices={len(flat)} edges={sum(map(len, edges.values()))} queries={a.queries}")
    results = {"python": bench(_pycore.DagIndex, layers, edges, queries, a.repeat)}
    if _core is not None:
        results["cython"] = bench(_core.DagIndex, layers, edges, queries, a.repeat)
    else:
        print("compiled extension not built; pure backend only")
    print(f"{'backend':8} {'build_ms':>10} {'query_ms':>10}")
    for name, (b, q) in results.items():
        print(f"{name:8} {b * 1e3:10.2f} {q * 1e3:10.2f}")
    if "cython" in results:
        py, cy = results["python"], results["cython"]
        print(f"speedup  {py[0] / cy[0]:10.2f}x {py[1] / cy[1]:10.2f}x")


if __name__ == "__main__":
    main()
