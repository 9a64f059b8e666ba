"""Compare the numba kernels against the pure-numpy fallback.

Run from the repository root::

    python3 benchmarks/bench_kernels.py            # default sizes
    python3 benchmarks/bench_kernels.py --quick    # small sizes, seconds

Each kernel is warmed up once per backend (JIT compile, caches), then timed
as the best of ``--repeat`` runs. The last column is the largest relative
difference between the two backends' outputs.
"""

from __future__ import annotations

import argparse
import time
from dataclasses import replace

import numpy as np

from mjls_lqr import TimeGrid, solve_riccati
from mjls_lqr.montecarlo import path_costs
from mjls_lqr.moments import propagate_moments
from mjls_lqr.problem_file import bundled_path, load_problem


def best_of(fn, repeat):
    fn()
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        times.append(time.perf_counter() - t0)
    return min(times), out


def rel_diff(a, b):
    a, b = np.asarray(a), np.asarray(b)
    return float(np.max(np.abs(a - b)) / max(np.max(np.abs(b)), 1e-300))


def cases(quick):
    ex4 = load_problem(bundled_path("ex4")).problem
    ex1 = load_problem(bundled_path("ex1")).problem
    T = 5.0 if quick else 30.0
    paths = 500 if quick else 10_000
    ex1 = replace(ex1, phi=np.full(3, 1 / 3), horizon=5.0)

    ex4 = replace(ex4, horizon=T)
    g4 = TimeGrid.from_step(T, 1e-3)
    sol4 = solve_riccati(ex4, g4)
    g1 = TimeGrid.from_step(ex1.horizon, 1e-3)
    sol1 = solve_riccati(ex1, g1)

    yield (f"riccati ex4 T={T:g} ({g4.num_steps} steps)",
           lambda nb: solve_riccati(ex4, g4, use_numba=nb).Y)
    yield (f"moments ex4 T={T:g} ({g4.num_steps} steps)",
           lambda nb: propagate_moments(ex4, sol4.gains, g4, use_numba=nb).X)
    yield (f"monte carlo ex1 T=5 ({paths} paths)",
           lambda nb: path_costs(ex1, sol1, paths, 42, use_numba=nb)[0])


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--quick", action="store_true", help="small problem sizes")
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args(argv)

    print(f"{'kernel':<40} {'numba s':>9} {'numpy s':>9} {'speedup':>8} {'max rel diff':>13}")
    for label, fn in cases(args.quick):
        t_nb, out_nb = best_of(lambda: fn(True), args.repeat)
        t_np, out_np = best_of(lambda: fn(False), args.repeat)
        print(f"{label:<40} {t_nb:9.3f} {t_np:9.3f} {t_np / t_nb:7.1f}x {rel_diff(out_np, out_nb):13.1e}")


if __name__ == "__main__":
    main()
