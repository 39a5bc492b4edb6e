"""Benchmark the compiled kernels against the NumPy fallback.

Usage: python benchmarks/bench_kernels.py [--repeats N]

Shapes cover the two regimes the simulator actually hits: many small
minibatch training steps on narrow client networks (where fused loops
beat per-call NumPy dispatch) and wide single-shot forwards over a whole
meta-dataset (where BLAS matmuls win). The speedup column is
python_time / compiled_time, so values above 1 favor the extension.
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from fedstack._kernels import py_backend

try:
    from fedstack._kernels import _core
except ImportError:
    _core = None


CASES = [
    # (name, layer dims, batch rows)
    ("client train step, 6->32->16->8, batch 32", [6, 32, 16, 8], 32),
    ("client train step, 6->64->16->8, batch 32", [6, 64, 16, 8], 32),
    ("meta train step, 120->16->8, batch 32", [120, 16, 8], 32),
    ("meta train step, 800->16->8, batch 32", [800, 16, 8], 32),
    ("stack forward, 6->64->16->8, batch 4096", [6, 64, 16, 8], 4096),
    ("meta forward, 120->16->8, batch 4096", [120, 16, 8], 4096),
]


def make_params(dims, rows, seed=0):
    rng = np.random.default_rng(seed)
    ws = [rng.normal(size=(o, i)) for i, o in zip(dims, dims[1:])]
    bs = [rng.normal(size=o) for o in dims[1:]]
    x = rng.normal(size=(rows, dims[0]))
    y = rng.integers(0, dims[-1], size=rows)
    return ws, bs, x, y


def best_of(fn, repeats):
    best = np.inf
    for _ in range(repeats):
        start = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - start)
    return best


def bench(backend, op, dims, rows, repeats, inner=20):
    ws, bs, x, y = make_params(dims, rows)
    if op == "train":
        def run():
            for _ in range(inner):
                backend.loss_and_grads(ws, bs, x, y)
    else:
        def run():
            for _ in range(inner):
                backend.forward_probs(ws, bs, x)
    run()  # warm up
    return best_of(run, repeats) / inner


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--repeats", type=int, default=7)
    args = parser.parse_args()

    if _core is None:
        print("compiled extension not built; run 'pip install -e .' first")
        return 1

    width = max(len(name) for name, _, _ in CASES)
    print(f"{'case':<{width}}  {'python':>10}  {'compiled':>10}  {'speedup':>7}")
    for name, dims, rows in CASES:
        op = "train" if "train" in name else "forward"
        t_py = bench(py_backend, op, dims, rows, args.repeats)
        t_c = bench(_core, op, dims, rows, args.repeats)
        print(
            f"{name:<{width}}  {t_py * 1e6:>8.1f}us  {t_c * 1e6:>8.1f}us  "
            f"{t_py / t_c:>6.2f}x"
        )
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
