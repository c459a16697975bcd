"""Time the compiled graph kernels against the pure-Python fallback.

    python3 benchmarks/bench_kernels.py [--sizes 50 200 800] [--repeat 5]

Each kernel runs on the same seeded random DAG under both backends; the
results are checked for equality before timings are reported.
"""

from __future__ import annotations

import argparse
import random
import sys
import timeit

from rhabac import kernels


def random_dag(rng: random.Random, n: int, out_degree: float) -> list[list[int]]:
    order = list(range(n))
    rng.shuffle(order)
    p = min(1.0, out_degree / max(n - 1, 1))
    adj = [[] for _ in range(n)]
    for j in range(n):
        for i in range(j):
            if rng.random() < p:
                adj[order[i]].append(order[j])
    return adj


def normalized(result):
    if isinstance(result, list) and result and isinstance(result[0], (list, set, tuple)):
        return [sorted(r) for r in result]
    if isinstance(result, (set, frozenset)):
        return sorted(result)
    return result


def cases(backend, n, adj):
    csr = backend.build_csr(n, adj)
    # start the search where it reaches the most vertices
    source = max(range(n), key=lambda v: len(backend.bfs_reached(csr, v)))
    return {
        "build_csr": lambda: backend.build_csr(n, adj),
        "bfs_reached": lambda: backend.bfs_reached(csr, source),
        "topological_order": lambda: backend.topological_order(csr),
        "transitive_reduction": lambda: backend.transitive_reduction(csr),
    }


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--sizes", type=int, nargs="+", default=[50, 200, 800])
    parser.add_argument("--degree", type=float, default=4.0, help="mean out-degree")
    parser.add_argument("--repeat", type=int, default=5)
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args(argv)

    backends = kernels.available_backends()
    if "cython" not in backends:
        print("compiled kernels are not built; reinstall with Cython available", file=sys.stderr)
        return 1
    py, cy = backends["python"], backends["cython"]

    print(f"{'nodes':>6} {'kernel':<22} {'python ms':>10} {'cython ms':>10} {'speedup':>8}")
    for n in args.sizes:
        adj = random_dag(random.Random(args.seed + n), n, args.degree)
        py_cases, cy_cases = cases(py, n, adj), cases(cy, n, adj)
        for name in py_cases:
            if name != "build_csr" and normalized(py_cases[name]()) != normalized(cy_cases[name]()):
                print(f"backends disagree on {name} at n={n}", file=sys.stderr)
                return 1
            t_py = min(timeit.repeat(py_cases[name], number=1, repeat=args.repeat)) * 1e3
            t_cy = min(timeit.repeat(cy_cases[name], number=1, repeat=args.repeat)) * 1e3
            print(f"{n:>6} {name:<22} {t_py:>10.3f} {t_cy:>10.3f} {t_py / t_cy if t_cy else float('inf'):>7.1f}x")
    return 0


if __name__ == "__main__":
    sys.exit(main())
