"""Command line interface: ``chunkode {run,study,traj,verify}``.

Exit codes are 0 on success, 1 when a trial or verification fails and 2 on
usage errors.
"""

from __future__ import annotations

import argparse
import contextlib
import sys

from chunkode import bench, verify

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_USAGE = 2


def _add_trial_args(parser):
    parser.add_argument("--problem", required=True, choices=bench.PROBLEMS)
    parser.add_argument("--n-unit", type=int, required=True)
    parser.add_argument("--n-batch", type=int, required=True)
    parser.add_argument("--n-time", type=int, required=True)
    parser.add_argument("--n-chunk", type=int, default=1)
    parser.add_argument("--jacobian", default="analytic", choices=bench.JACOBIANS)
    parser.add_argument("--solver", default="thomas", choices=bench.SOLVERS)
    parser.add_argument("--n-switch", type=int, default=1, help="PCR sweeps before Thomas (hybrid only)")
    parser.add_argument("--integration", default="backward", choices=bench.INTEGRATIONS)
    parser.add_argument("--seed", type=int, default=7)
    parser.add_argument("--t-max", type=float, default=None, help="final time (default: per problem)")
    parser.add_argument("--out", default="-", help="output CSV path, '-' for stdout")


def build_parser():
    parser = argparse.ArgumentParser(prog="chunkode", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="time a single trial")
    _add_trial_args(run)
    run.add_argument("--gradient", default="adjoint", choices=bench.GRADIENTS)
    run.add_argument("--repeats", type=int, default=3)

    study = sub.add_parser("study", help="run every combination in a grid file")
    study.add_argument("--grid", required=True, help="file of 'key = v1, v2' lines")
    study.add_argument("--out", default="-")
    study.add_argument(
        "--parallel",
        action="store_true",
        help="run trials in worker processes (values unchanged, timings unreliable)",
    )
    study.add_argument("--workers", type=int, default=None)

    traj = sub.add_parser("traj", help="dump a trajectory as long-format CSV")
    _add_trial_args(traj)

    check = sub.add_parser("verify", help="run a self-check suite")
    check.add_argument("suite", choices=[*verify.SUITES, "all"])
    return parser


@contextlib.contextmanager
def _output(path):
    if path == "-":
        yield sys.stdout
    else:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            yield fh


def _trial_config(args, **extra):
    fields = dict(
        problem=args.problem,
        n_unit=args.n_unit,
        n_batch=args.n_batch,
        n_time=args.n_time,
        n_chunk=args.n_chunk,
        jacobian=args.jacobian,
        solver=args.solver,
        n_switch=args.n_switch,
        integration=args.integration,
        seed=args.seed,
        t_max=args.t_max,
    )
    fields.update(extra)
    return bench.TrialConfig(**fields)


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.command == "run":
            config = _trial_config(args, gradient=args.gradient, repeats=args.repeats)
            with _output(args.out) as out:
                records = bench.run_study([config], out)
            return EXIT_OK if all(r.status == "ok" for r in records) else EXIT_FAILURE

        if args.command == "study":
            try:
                with open(args.grid, encoding="utf-8") as fh:
                    configs = bench.expand_grid(bench.parse_grid(fh.read()))
            except OSError as exc:
                raise bench.GridError(str(exc)) from None
            with _output(args.out) as out:
                records = bench.run_study(configs, out, parallel=args.parallel, max_workers=args.workers)
            return EXIT_OK if all(r.status == "ok" for r in records) else EXIT_FAILURE

        if args.command == "traj":
            config = _trial_config(args, gradient="none", repeats=1)
            with _output(args.out) as out:
                bench.dump_trajectory(config, out)
            return EXIT_OK

        return EXIT_OK if verify.run(args.suite, sys.stdout) else EXIT_FAILURE
    except bench.GridError as exc:
        print(f"chunkode: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ArithmeticError, RuntimeError, ValueError) as exc:
        print(f"chunkode: failed: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_FAILURE


if __name__ == "__main__":
    sys.exit(main())
