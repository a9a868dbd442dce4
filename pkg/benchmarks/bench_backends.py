"""Time the compiled kernels against the pure numpy fallback.

Run:  python benchmarks/bench_backends.py [--repeats N]

Each kernel is timed best-of-N on fixed seeded inputs sized like real use:
box matrices from a dense field of view, a split scan over a large node,
and one t-SNE iteration (similarities, gradient, divergence) at n=1000.
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from smearkit._kernels import _purepy

try:
    from smearkit._kernels import _core
except ImportError:
    _core = None


def best_of(repeats, fn, *args):
    best = float("inf")
    result = None
    for _ in range(repeats):
        start = time.perf_counter()
        result = fn(*args)
        best = min(best, time.perf_counter() - start)
    return best, result


def make_cases(rng):
    origin_a = rng.uniform(0, 2000, (1500, 2))
    boxes_a = np.hstack([origin_a, origin_a + rng.uniform(5, 40, (1500, 2))])
    origin_b = rng.uniform(0, 2000, (1200, 2))
    boxes_b = np.hstack([origin_b, origin_b + rng.uniform(5, 40, (1200, 2))])

    n_split = 200_000
    values = np.sort(rng.normal(size=n_split))
    labels = rng.integers(0, 6, n_split).astype(np.int32)
    weights = rng.uniform(0.5, 2.0, n_split)

    x35 = rng.normal(size=(1000, 35))
    y2 = rng.normal(size=(1000, 2))
    p = rng.uniform(size=(1000, 1000))
    p = p + p.T
    np.fill_diagonal(p, 0.0)
    p /= p.sum()

    num, qsum = _purepy.student_t_terms(y2)
    return [
        ("iou_matrix 1500x1200", "iou_matrix", (boxes_a, boxes_b)),
        ("scan_split n=200k", "scan_split", (values, labels, weights, 6, 1)),
        ("sq_dist_matrix 1000x35", "sq_dist_matrix", (x35,)),
        ("student_t_terms n=1000", "student_t_terms", (y2,)),
        ("tsne_grad n=1000", "tsne_grad", (p, num, qsum, y2)),
        ("kl_from_terms n=1000", "kl_from_terms", (p, num, qsum)),
    ]


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--repeats", type=int, default=5)
    args = parser.parse_args()

    cases = make_cases(np.random.default_rng(0))
    width = max(len(name) for name, _, _ in cases)
    header = f"{'kernel'.ljust(width)}  {'python':>10}  {'compiled':>10}  {'speedup':>8}"
    print(header)
    print("-" * len(header))
    for name, attr, case_args in cases:
        py_time, _ = best_of(args.repeats, getattr(_purepy, attr), *case_args)
        if _core is None:
            print(f"{name.ljust(width)}  {py_time * 1e3:9.2f}ms  {'n/a':>10}  {'n/a':>8}")
            continue
        c_time, _ = best_of(args.repeats, getattr(_core, attr), *case_args)
        print(f"{name.ljust(width)}  {py_time * 1e3:9.2f}ms  {c_time * 1e3:9.2f}ms"
              f"  {py_time / c_time:7.1f}x")
    if _core is None:
        print("\ncompiled kernels not built; showing fallback timings only")


if __name__ == "__main__":
    main()
