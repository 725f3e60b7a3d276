"""Compare the compiled and numpy kernel backends on identical inputs.

    python benchmarks/bench_kernels.py [--repeat 5] [--paths 100000]
"""

import argparse
import json
import timeit

import numpy as np

from dgroves import _pykernels

try:
    from dgroves import _ckernels
except ImportError:
    _ckernels = None


def cases(n_paths):
    rng = np.random.default_rng(0)
    m, A = 4, 3
    cum = np.ascontiguousarray(np.cumsum(rng.dirichlet(np.ones(m), size=(m, A)), axis=-1))
    states, actions, u = rng.integers(0, m, n_paths), rng.integers(0, A, n_paths), rng.random(n_paths)
    out = np.empty(n_paths, np.int64)
    theta, omega = rng.random(n_paths), 2 * rng.random(n_paths) - 1
    G = 9
    grid = np.ascontiguousarray(np.repeat(rng.random(G)[:, None], n_paths, 1))
    bar, acc, dacc = rng.random(n_paths), np.zeros((G, n_paths)), np.zeros(n_paths)

    def make(impl):
        return {
            "advance": lambda: impl.advance(cum, states, actions, u, out),
            "wrap_step": lambda: impl.wrap_step(theta, 0.5, omega),
            "example1_step": lambda: impl.example1_step(grid.copy(), bar.copy(), omega, 0.5, 0.5, 0.9, 0.45,
                                                        acc, dacc),
        }
    return make


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeat", type=int, default=5)
    parser.add_argument("--paths", type=int, default=100_000)
    args = parser.parse_args()
    make = cases(args.paths)
    impls = {"python": make(_pykernels)}
    if _ckernels is not None:
        impls["cython"] = make(_ckernels)
    results = {}
    for kernel in impls["python"]:
        row = {}
        for name, funcs in impls.items():
            row[name] = min(timeit.repeat(funcs[kernel], number=10, repeat=args.repeat)) / 10
        if "cython" in row:
            row["speedup"] = row["python"] / row["cython"]
        results[kernel] = row
        print(f"{kernel:14s} " + "  ".join(f"{k}={v * 1e3:.3f}ms" if k != "speedup" else f"speedup={v:.1f}x"
                                           for k, v in row.items()))
    print(json.dumps({"paths": args.paths, "results": results}, sort_keys=True))


if __name__ == "__main__":
    main()
