#!/usr/bin/env python3
"""Benchmark the compiled distance kernel against the numpy fallback.

Workloads mirror the scorer's hot loop: min squared distance from a tile of
query tokens to a full candidate collection. Run:

    python benchmarks/bench_kernels.py [--threads N]
"""

import argparse
import time

import numpy as np

from voxtok import kernels


def _time_call(fn, repeats=3):
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def run(threads: int) -> None:
    rng = np.random.default_rng(0)
    backends = kernels.available_backends()
    print(f"backends: {', '.join(backends)} (default {kernels.default_backend()})")
    print(f"native threads: {threads}")
    header = f"{'queries':>8} {'cands':>8} {'dim':>5}"
    for b in backends:
        header += f" {b + ' (s)':>12}"
    if len(backends) == 2:
        header += f" {'speedup':>9} {'max |diff|':>11}"
    print(header)

    cases = [
        (512, 512, 96),
        (4096, 4096, 96),
        (4096, 4096, 384),
        (16384, 4096, 384),
    ]
    for m, n, d in cases:
        queries = rng.standard_normal((m, d), dtype=np.float32)
        cands = rng.standard_normal((n, d), dtype=np.float32)
        row = f"{m:>8} {n:>8} {d:>5}"
        results, times = {}, {}
        for backend in backends:
            norms = kernels.row_sqnorms(cands, backend=backend)
            kw = {"threads": threads} if backend == "native" else {}
            times[backend] = _time_call(
                lambda: results.__setitem__(
                    backend,
                    kernels.min_sqdist(queries, cands, cand_sqnorms=norms, backend=backend, **kw),
                )
            )
            row += f" {times[backend]:>12.4f}"
        if len(backends) == 2:
            speedup = times["numpy"] / times["native"]
            diff = float(np.abs(results["native"] - results["numpy"]).max())
            row += f" {speedup:>8.2f}x {diff:>11.2e}"
        print(row)


if __name__ == "__main__":
    parser = argparse.ArgumentParser()
    parser.add_argument("--threads", type=int, default=4)
    run(parser.parse_args().threads)
