"""Compare the numba kernels against the pure-numpy fallback.

Runs the same configurations on both backends, checks that the final
populations agree bit for bit, and prints a timing table. The numba
column includes one warm-up run so JIT compilation does not pollute the
numbers.

Usage::

    python3 benchmarks/compare_backends.py --ps 200 --dim 50 --iters 50
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from protozoa import ApoConfig, Bounds, EngineMode, FUNCTION_NAMES, run


def time_run(cfg, function, backend, mode):
    started = time.perf_counter()
    result = run(cfg, function, mode=mode, backend=backend)
    return time.perf_counter() - started, result


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--ps", type=int, default=200)
    parser.add_argument("--dim", type=int, default=50)
    parser.add_argument("--iters", type=int, default=50)
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--parallel", action="store_true",
                        help="also time the parallel mode on each backend")
    args = parser.parse_args()

    cfg = ApoConfig(
        ps=args.ps,
        dim=args.dim,
        bounds=Bounds(-100.0, 100.0, args.dim),
        max_iterations=args.iters,
        seed=args.seed,
    )
    modes = [("seq", EngineMode.sequential())]
    if args.parallel:
        modes.append(("par", EngineMode.parallel("auto")))

    print(f"ps={args.ps} dim={args.dim} iters={args.iters} seed={args.seed}")
    header = f"{'function':28s} {'mode':4s} {'numpy (s)':>10s} {'numba (s)':>10s} {'ratio':>7s}  best fitness"
    print(header)
    print("-" * len(header))
    for function in FUNCTION_NAMES:
        for label, mode in modes:
            run(cfg, function, mode=mode, backend="numba")  # warm the JIT cache
            t_np, r_np = time_run(cfg, function, "numpy", mode)
            t_nb, r_nb = time_run(cfg, function, "numba", mode)
            if not np.array_equal(r_np.population.positions, r_nb.population.positions):
                raise SystemExit(f"backend mismatch for {function} ({label}): positions differ")
            if not np.array_equal(r_np.population.fitness, r_nb.population.fitness):
                raise SystemExit(f"backend mismatch for {function} ({label}): fitness differs")
            ratio = t_np / t_nb if t_nb else float("inf")
            print(f"{function:28s} {label:4s} {t_np:10.4f} {t_nb:10.4f} {ratio:6.1f}x  {r_nb.best_fitness:.6g}")
    print("final populations identical on both backends for every row")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
