"""Compare the compiled kernel extension against the pure-Python fallback.

Times the three hot paths behind one run: batch evaluation of an exported
model expression, interval enclosures of its violation (the verifier's
inner loop), and full-batch Adam training.

Usage: python benchmarks/bench_kernels.py [--quick]
"""

from __future__ import annotations

import argparse
import math
import time

import numpy as np

from lgml import _kernels_py as pure
from lgml.expr import parse_truth
from lgml.model import Dataset, MlpConfig, train
from lgml.intervals import Box
from lgml.tape import compile_tape
from lgml.verify import build_violation

try:
    from lgml import _kernels as compiled
except ImportError:
    compiled = None


def best_of(repeats: int, fn) -> float:
    times = []
    for _ in range(repeats):
        start = time.perf_counter()
        fn()
        times.append(time.perf_counter() - start)
    return min(times)


def make_workloads(quick: bool):
    """One trained sine model; its violation tape is the verifier's load."""
    rng = np.random.default_rng(7)
    X = rng.uniform(-math.pi, math.pi, (8, 1))
    data = Dataset(("x",), X, np.sin(X[:, 0]))
    fit = train(MlpConfig(input_dim=1, max_epochs=3000, restarts=1,
                          patience=1500), data)
    fhat, grads = fit.model.to_expr()
    truth = parse_truth("f(x)^2 + df(x, x)^2 = 1")
    domain = Box.from_bounds({"x": (-math.pi, math.pi)})
    violation = build_violation(truth, fhat, grads, domain)
    tape = compile_tape(violation.v, ("x",))

    n_batch = 20_000 if quick else 200_000
    n_boxes = 2_000 if quick else 20_000
    epochs = 5_000 if quick else 50_000
    grid = np.ascontiguousarray(
        np.linspace(-math.pi, math.pi, n_batch).reshape(-1, 1))
    boxes = np.linspace(-math.pi, math.pi, n_boxes + 1)

    train_X = rng.uniform(-math.pi, math.pi, (40, 1))
    train_y = np.sin(train_X[:, 0])
    dims = np.array([1, 3, 3, 1], dtype=np.int32)
    n_params = sum(int(a * b + b) for a, b in zip(dims, dims[1:]))
    w0 = rng.standard_normal(n_params)

    def batch(impl):
        out = np.empty(n_batch)
        impl.eval_scalar_batch(tape.ops, tape.a1, tape.a2, tape.cval,
                               grid, out)

    def intervals(impl):
        for i in range(n_boxes):
            impl.eval_interval(tape.ops, tape.a1, tape.a2, tape.cval,
                               boxes[i:i + 1], boxes[i + 1:i + 2])

    def adam(impl):
        w = w0.copy()
        impl.adam_fit(train_X, train_y, dims, w, 0, 1e-2, 0.9, 0.999,
                      1e-8, epochs, 0.0, epochs, 0.0)

    return [
        (f"eval_scalar_batch, {n_batch:,} points x {tape.n_nodes} nodes", batch),
        (f"eval_interval, {n_boxes:,} boxes x {tape.n_nodes} nodes", intervals),
        (f"adam_fit, {epochs:,} epochs on 40 points", adam),
    ]


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--quick", action="store_true",
                        help="10x smaller workloads")
    parser.add_argument("--repeats", type=int, default=3)
    args = parser.parse_args()

    if compiled is None:
        print("compiled extension not built; timing the pure backend only")

    workloads = make_workloads(args.quick)
    width = max(len(name) for name, _ in workloads)
    header = f"{'workload':<{width}}  {'compiled':>10}  {'pure':>10}  {'speedup':>8}"
    print(header)
    print("-" * len(header))
    for name, fn in workloads:
        t_pure = best_of(args.repeats, lambda: fn(pure))
        if compiled is None:
            print(f"{name:<{width}}  {'-':>10}  {t_pure:>9.3f}s  {'-':>8}")
            continue
        t_comp = best_of(args.repeats, lambda: fn(compiled))
        print(f"{name:<{width}}  {t_comp:>9.3f}s  {t_pure:>9.3f}s  "
              f"{t_pure / t_comp:>7.1f}x")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
