"""Benchmark the numba kernels against the pure-numpy fallback.

Runs both implementations of ``topk_scan`` and ``mmr_greedy`` on
identical inputs, checks that they agree, and reports wall time per
call.  The package selects the path at import time; set
``CLAIMCHECK_NUMBA=0`` to force the numpy fallback in production.

Usage:
    python benchmarks/bench_kernels.py [--rows 20000] [--dim 384] [--repeats 50]
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from claimcheck import kernels


def time_call(fn, *args, repeats: int) -> float:
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn(*args)
        best = min(best, time.perf_counter() - t0)
    return best


def unit_rows(rng: np.random.Generator, n: int, d: int) -> np.ndarray:
    m = rng.normal(size=(n, d))
    return m / np.linalg.norm(m, axis=1, keepdims=True)


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--rows", type=int, default=20000, help="index rows for topk_scan")
    parser.add_argument("--dim", type=int, default=384, help="vector dimension")
    parser.add_argument("--pool", type=int, default=200, help="candidate pool for mmr_greedy")
    parser.add_argument("--k", type=int, default=10)
    parser.add_argument("--repeats", type=int, default=50)
    args = parser.parse_args()

    rng = np.random.default_rng(7)
    matrix = unit_rows(rng, args.rows, args.dim)
    query = unit_rows(rng, 1, args.dim)[0]
    cand = unit_rows(rng, args.pool, args.dim)
    cand_sims = cand @ query
    pairwise = cand @ cand.T

    print(f"numba available: {kernels.HAS_NUMBA}, active path: {kernels.ACTIVE_PATH}")
    if not kernels.NUMBA_ENABLED:
        print("numba path disabled; timing the numpy fallback only")

    cases = [
        ("topk_scan", kernels.topk_scan_numpy, kernels.topk_scan_numba,
         (matrix, query, args.k, 0.0)),
        ("mmr_greedy", kernels.mmr_greedy_numpy, kernels.mmr_greedy_numba,
         (cand_sims, pairwise, 0.5, args.k)),
    ]

    if kernels.NUMBA_ENABLED:
        kernels.warmup()  # JIT compile outside the timed region

    header = f"{'kernel':<12} {'numpy (ms)':>12} {'numba (ms)':>12} {'speedup':>9}"
    print(header)
    print("-" * len(header))
    for name, numpy_fn, numba_fn, call_args in cases:
        baseline = numpy_fn(*call_args)
        numpy_ms = time_call(numpy_fn, *call_args, repeats=args.repeats) * 1e3
        if kernels.NUMBA_ENABLED:
            candidate = numba_fn(*call_args)
            base_parts = baseline if isinstance(baseline, tuple) else (baseline,)
            cand_parts = candidate if isinstance(candidate, tuple) else (candidate,)
            agree = all(
                np.allclose(b, c, rtol=0.0, atol=1e-9)
                for b, c in zip(base_parts, cand_parts)
            )
            if not agree:
                raise SystemExit(f"{name}: numba and numpy paths disagree")
            numba_ms = time_call(numba_fn, *call_args, repeats=args.repeats) * 1e3
            print(f"{name:<12} {numpy_ms:>12.3f} {numba_ms:>12.3f} {numpy_ms / numba_ms:>8.1f}x")
        else:
            print(f"{name:<12} {numpy_ms:>12.3f} {'-':>12} {'-':>9}")


if __name__ == "__main__":
    main()
