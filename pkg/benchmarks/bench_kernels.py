"""Compare the compiled and pure-Python kernel backends.

Times the batched LU factorization, the Thomas sweep and full PCR/hybrid
solves on random block-bidiagonal systems, and one chunked backward Euler
integration, under each available backend.

    python benchmarks/bench_kernels.py --n-chunk 64 --n-batch 16 --n-size 6
"""

import argparse
import csv
import sys
import timeit

import numpy as np

from chunkode import _backend, linalg, models
from chunkode.integrate import TimeGrid, integrate_backward_euler


def random_system(rng, n_chunk, n_batch, n_size):
    diag = rng.standard_normal((n_chunk, n_batch, n_size, n_size)) + 3.0 * np.eye(n_size)
    offdiag = rng.standard_normal((n_chunk - 1, n_batch, n_size, n_size))
    rhs = rng.standard_normal((n_chunk, n_batch, n_size))
    return linalg.BlockBidiagonalSystem(diag, offdiag), rhs


def cases(args):
    system, rhs = random_system(np.random.default_rng(args.seed), args.n_chunk, args.n_batch, args.n_size)
    fac = linalg.factor_diagonal_blocks(system)
    model = models.build("chaboche", args.n_unit, args.n_batch)
    y0 = models.initial_state(model, args.n_batch)
    grid = TimeGrid.uniform(models.default_t_max("chaboche"), args.n_time, args.n_batch)
    return {
        "lu_factor": lambda: linalg.factor_diagonal_blocks(system),
        "thomas_sweep": lambda: linalg.solve_thomas(system, rhs, fac),
        "thomas": lambda: linalg.solve_thomas(system, rhs),
        "pcr": lambda: linalg.solve_pcr(system, rhs),
        "hybrid": lambda: linalg.solve_hybrid(system, rhs, args.n_switch),
        "integrate": lambda: integrate_backward_euler(model, y0, grid, args.n_chunk_ode),
    }


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--n-chunk", type=int, default=64)
    parser.add_argument("--n-batch", type=int, default=16)
    parser.add_argument("--n-size", type=int, default=6)
    parser.add_argument("--n-switch", type=int, default=2)
    parser.add_argument("--n-unit", type=int, default=3)
    parser.add_argument("--n-time", type=int, default=400)
    parser.add_argument("--n-chunk-ode", type=int, default=1, help="chunk count for the integration case")
    parser.add_argument("--repeats", type=int, default=5)
    parser.add_argument("--seed", type=int, default=7)
    args = parser.parse_args(argv)

    timings = {}
    for backend in _backend.available():
        with _backend.using(backend):
            for name, fn in cases(args).items():
                fn()  # warm-up
                number = 3
                best = min(timeit.repeat(fn, number=number, repeat=args.repeats)) / number
                timings[backend, name] = best

    writer = csv.writer(sys.stdout, lineterminator="\n")
    writer.writerow(("case", "backend", "seconds", "speedup_vs_python"))
    for (backend, name), seconds in timings.items():
        speedup = timings["python", name] / seconds
        writer.writerow((name, backend, f"{seconds:.6g}", f"{speedup:.2f}"))
    if "compiled" not in _backend.available():
        print("compiled extension not built; only the Python backend was timed", file=sys.stderr)


if __name__ == "__main__":
    main()
