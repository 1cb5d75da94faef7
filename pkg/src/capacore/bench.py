"""Benchmark the compiled hash kernel against the pure-Python fallback."""

from __future__ import annotations

import random
import time

from . import kernels
from .common import derive_seed
from .geometry import Point, GridHierarchy
from .params import derive, PRACTICAL
from .coreset import OfflineBuilder


def _time(fn, *args, repeat=3):
    best = float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn(*args)
        best = min(best, time.perf_counter() - t0)
    return best


def bench_poly(n_points: int = 20000, lam: int = 64, seed: int = 7):
    rng = random.Random(seed)
    mod = kernels.MERSENNE61
    coeffs = [rng.randrange(mod) for _ in range(lam)]
    xs = [rng.randrange(mod) for _ in range(n_points)]
    rows = []
    t_py = _time(kernels.poly_eval_batch, coeffs, xs, mod, True)
    rows.append(("python", n_points / t_py, t_py))
    if kernels.HAVE_COMPILED:
        t_cy = _time(kernels.poly_eval_batch, coeffs, xs, mod, False)
        rows.append(("cython", n_points / t_cy, t_cy))
        a = kernels.poly_eval_batch(coeffs, xs[:512], mod, True)
        b = kernels.poly_eval_batch(coeffs, xs[:512], mod, False)
        assert a == b, "kernel outputs disagree"
    return rows


def bench_build(n: int = 400, seed: int = 11):
    rng = random.Random(seed)
    Delta, d = 64, 2
    pts = [Point((rng.randrange(1, Delta + 1), rng.randrange(1, Delta + 1)), i)
           for i in range(n)]
    params = derive(k=2, r=2, eps=0.4, eta=0.4, Delta=Delta, d=d,
                    mode=PRACTICAL, scale=1e-53)
    grid = GridHierarchy.from_seed(derive_seed(seed, "shift"), Delta, d)
    builder = OfflineBuilder(pts, grid, params, seed, exact_counts=True)
    return _time(builder.build_auto, repeat=1)


def run(report=print):
    report(f"active kernel: {kernels.active_kernel()}")
    report("")
    report("polynomial hashing (20000 evals, lambda=64):")
    for name, rate, secs in bench_poly():
        report(f"  {name:<8} {rate:12.0f} evals/s   ({secs * 1e3:.1f} ms)")
    secs = bench_build()
    report("")
    report(f"offline build, n=400, Delta=64, sampling active: {secs * 1e3:.1f} ms")
