"""Self-check suites run by ``chunkode verify``.

Each suite yields :class:`Check` results at fixed seeds.  They are quick
versions of the properties the test suite covers in depth.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from chunkode import _backend, linalg, models
from chunkode.adjoint import gradient_adjoint, gradient_fd_oracle
from chunkode.integrate import TimeGrid, integrate_backward_euler, integrate_forward_euler
from chunkode.model import NonFiniteOutput, jacobian_state

SEED = 7
MAX_REPORTED = 10


@dataclass(frozen=True)
class Check:
    name: str
    ok: bool
    detail: str = ""


def random_system(rng, n_chunk, n_batch, n_size):
    """Well-conditioned random block-bidiagonal system and right hand side."""
    diag = rng.standard_normal((n_chunk, n_batch, n_size, n_size)) + 3.0 * np.eye(n_size)
    offdiag = rng.standard_normal((n_chunk - 1, n_batch, n_size, n_size))
    rhs = rng.standard_normal((n_chunk, n_batch, n_size))
    return linalg.BlockBidiagonalSystem(diag, offdiag), rhs


def _rel(a, b):
    return float(np.max(np.abs(a - b)) / max(np.max(np.abs(b)), 1e-300))


def suite_solvers():
    rng = np.random.default_rng(SEED)
    for backend in _backend.available():
        with _backend.using(backend):
            for n_chunk in (1, 2, 3, 5, 7, 8, 16, 33):
                for n_size in (1, 3, 5):
                    system, rhs = random_system(rng, n_chunk, 2, n_size)
                    ref = linalg.solve_dense_oracle(system, rhs)
                    for name, solve in (
                        ("thomas", linalg.solve_thomas),
                        ("pcr", linalg.solve_pcr),
                        ("hybrid1", lambda s, r: linalg.solve_hybrid(s, r, 1)),
                        ("hybrid3", lambda s, r: linalg.solve_hybrid(s, r, 3)),
                    ):
                        err = _rel(solve(system, rhs), ref)
                        yield Check(f"{backend}/{name} n_chunk={n_chunk} n_size={n_size}", err <= 1e-9, f"rel err {err:.2e}")
                    stats = linalg.SolveStats()
                    linalg.solve_pcr(system, rhs, stats=stats)
                    want = sum(p.bit_length() - 1 for p in linalg.power_of_two_partitions(n_chunk))
                    yield Check(f"{backend}/pcr sweeps n_chunk={n_chunk}", stats.sweeps == want, f"{stats.sweeps} != {want}")


def _smooth_state(rng, model, problem, n_batch):
    y = 0.1 * rng.standard_normal((2, n_batch, model.n_size))
    if problem == "neuron":
        # gating variables live in (0, 1)
        y[..., 1:] = 0.5 + 0.2 * np.tanh(y[..., 1:])
    return y


def suite_jacobians():
    rng = np.random.default_rng(SEED)
    for problem in models.PROBLEMS:
        model = models.build(problem, 2, 3)
        y = _smooth_state(rng, model, problem, 3)
        t = rng.uniform(0.0, 1.0, y.shape[:-1])
        ref = jacobian_state(model, t, y, "analytic")
        scale = 1.0 + np.max(np.abs(ref))
        for strategy, tol in (("forward_ad", 1e-12), ("finite_difference", 1e-5)):
            err = float(np.max(np.abs(jacobian_state(model, t, y, strategy) - ref)) / scale)
            yield Check(f"{problem}/{strategy}", err <= tol, f"scaled err {err:.2e} > {tol:g}")


def suite_gradients():
    for problem in models.PROBLEMS:
        model = models.build(problem, 2, 3)
        y0 = models.initial_state(model, 3)
        grid = TimeGrid.uniform(models.default_t_max(problem), 32, 3)
        for scheme in ("backward", "forward"):
            _, g = gradient_adjoint(model, y0, grid, 8, scheme=scheme)
            ref = gradient_fd_oracle(model, y0, grid, scheme=scheme)
            err = float(np.max(np.abs(g - ref) / (1.0 + np.abs(ref))))
            yield Check(f"{problem}/{scheme} adjoint vs FD", err <= 1e-4, f"err {err:.2e}")


def suite_convergence():
    p, dt = 0.8, 0.25
    model = models.build_scalar_decay(p)
    traj = integrate_backward_euler(model, np.ones((1, 1)), TimeGrid.uniform(dt, 1, 1))
    err = abs(traj.states[1, 0, 0] - 1.0 / (1.0 + p * dt))
    yield Check("backward Euler one step", err <= 1e-14, f"err {err:.2e}")

    errors = []
    for n in (20, 40, 80):
        traj = integrate_backward_euler(model, np.ones((1, 1)), TimeGrid.uniform(1.0, n, 1), n_chunk=n)
        errors.append(abs(traj.states[-1, 0, 0] - np.exp(-p)))
    ratios = [errors[k] / errors[k + 1] for k in range(2)]
    ok = all(1.8 <= r <= 2.2 for r in ratios)
    yield Check("first-order convergence", ok, f"ratios {ratios}")

    stiff = models.build_scalar_decay(1e6)
    grid = TimeGrid.uniform(100.0, 100, 1)
    traj = integrate_backward_euler(stiff, np.ones((1, 1)), grid, n_chunk=10)
    ok = bool(np.all(np.abs(traj.states) <= 1.0))
    yield Check("stiff decay stable under backward Euler", ok, "state grew")
    try:
        integrate_forward_euler(stiff, np.ones((1, 1)), grid)
        yield Check("stiff decay blows up under forward Euler", False, "stayed finite")
    except NonFiniteOutput as exc:
        yield Check("stiff decay blows up under forward Euler", exc.step <= 60, f"step {exc.step}")


SUITES = {
    "solvers": suite_solvers,
    "jacobians": suite_jacobians,
    "gradients": suite_gradients,
    "convergence": suite_convergence,
}


def run(suite, out):
    """Run one suite (or ``all``), print a report to ``out`` and return ``True`` on success."""
    names = list(SUITES) if suite == "all" else [suite]
    failures = []
    total = 0
    for name in names:
        for check in SUITES[name]():
            total += 1
            if not check.ok:
                failures.append((name, check))
    for name, check in failures[:MAX_REPORTED]:
        print(f"FAIL [{name}] {check.name}: {check.detail}", file=out)
    if len(failures) > MAX_REPORTED:
        print(f"... {len(failures) - MAX_REPORTED} more failures", file=out)
    print(f"{total - len(failures)}/{total} checks passed ({', '.join(names)})", file=out)
    return not failures
