"""Acceptance criteria, one test each.

Every test records a one-line PASS/FAIL verdict (printed in the pytest
terminal summary by ``conftest.py``) before asserting, and checks its own
runtime budget.
"""

import itertools
import math
import time

import numpy as np

from chunkode import _backend, cli, linalg, models
from chunkode.adjoint import gradient_adjoint, gradient_fd_oracle
from chunkode.bench import TrialConfig, run_trial
from chunkode.integrate import TimeGrid, integrate_backward_euler, integrate_forward_euler
from chunkode.model import NonFiniteOutput, jacobian_state
from conftest import random_system, rel_err

VERDICTS = {}


def record(number, title, ok, detail, elapsed, budget):
    ok = bool(ok) and elapsed <= budget
    line = f"{'PASS' if ok else 'FAIL'} criterion {number} ({title}): {detail}; {elapsed:.2f} s of {budget:g} s"
    VERDICTS[number] = line
    print(line)
    assert ok, line


def test_1_solver_equivalence():
    start = time.perf_counter()
    worst = 0.0
    rng = np.random.default_rng(2024)
    for backend in _backend.available():
        with _backend.using(backend):
            for n_chunk, n_size, n_batch in itertools.product(range(1, 34), range(1, 6), (1, 3)):
                system, rhs = random_system(rng, n_chunk, n_batch, n_size)
                solutions = [
                    linalg.solve_dense_oracle(system, rhs),
                    linalg.solve_thomas(system, rhs),
                    linalg.solve_pcr(system, rhs),
                    linalg.solve_hybrid(system, rhs, 0),
                    linalg.solve_hybrid(system, rhs, 1),
                    linalg.solve_hybrid(system, rhs, 2),
                ]
                for a, b in itertools.combinations(solutions, 2):
                    worst = max(worst, rel_err(a, b))
    elapsed = time.perf_counter() - start
    record(1, "solver equivalence", worst <= 1e-9, f"max pairwise rel diff {worst:.2e} (limit 1e-9)", elapsed, 10)


def test_2_backward_euler_correctness():
    start = time.perf_counter()
    notes = []
    p, dt = 1.0, 0.1
    y1 = integrate_backward_euler(models.build_scalar_decay(p), np.ones((1, 1)), TimeGrid.uniform(dt, 1, 1)).states[1, 0, 0]
    exact_err = abs(y1 - 1.0 / (1.0 + p * dt))
    ok_exact = exact_err <= 1e-14
    notes.append(f"one-step err {exact_err:.1e}")

    errors = []
    for n in (16, 32, 64, 128):
        traj = integrate_backward_euler(models.build_scalar_decay(1.0), np.ones((1, 1)), TimeGrid.uniform(1.0, n, 1), 8)
        errors.append(abs(traj.states[-1, 0, 0] - math.exp(-1.0)))
    ratios = [errors[k] / errors[k + 1] for k in range(3)]
    ok_order = all(1.8 <= r <= 2.2 for r in ratios)
    notes.append("ratios " + "/".join(f"{r:.3f}" for r in ratios))

    stiff = models.build_scalar_decay(1e6)
    grid = TimeGrid.uniform(100.0, 100, 1)
    states = integrate_backward_euler(stiff, np.ones((1, 1)), grid, 10).states[:, 0, 0]
    ok_stable = bool(np.all(np.isfinite(states)) and np.all(np.diff(np.abs(states)) <= 0))
    blow_step = None
    try:
        integrate_forward_euler(stiff, np.ones((1, 1)), grid)
    except NonFiniteOutput as exc:
        blow_step = exc.step
    ok_blow = blow_step is not None and blow_step <= 60
    notes.append(f"stiff BE stable={ok_stable}, FE non-finite at step {blow_step}")
    elapsed = time.perf_counter() - start
    record(2, "backward Euler correctness", ok_exact and ok_order and ok_stable and ok_blow, ", ".join(notes), elapsed, 5)


def test_3_chunk_invariance():
    start = time.perf_counter()
    worst_traj, worst_grad = 0.0, 0.0
    for problem in models.PROBLEMS:
        model = models.build(problem, 3, 3)
        y0 = models.initial_state(model, 3)
        grid = TimeGrid.uniform(models.default_t_max(problem), 64, 3)
        trajs, grads = [], []
        for n_chunk in (1, 2, 4, 8, 16, 64):
            trajs.append(integrate_backward_euler(model, y0, grid, n_chunk).states)
            grads.append(gradient_adjoint(model, y0, grid, n_chunk)[1])
        for a, b in itertools.combinations(trajs, 2):
            worst_traj = max(worst_traj, float(np.max(np.abs(a - b))))
        for a, b in itertools.combinations(grads, 2):
            worst_grad = max(worst_grad, float(np.linalg.norm(a - b) / np.linalg.norm(b)))
    elapsed = time.perf_counter() - start
    ok = worst_traj <= 1e-6 and worst_grad <= 1e-8
    detail = f"max traj diff {worst_traj:.2e} (limit 1e-6), max grad rel diff {worst_grad:.2e} (limit 1e-8)"
    record(3, "chunk invariance", ok, detail, elapsed, 60)


def test_4_gradient_correctness():
    start = time.perf_counter()
    worst = {}
    for problem, scheme in itertools.product(models.PROBLEMS, ("backward", "forward")):
        model = models.build(problem, 3, 3)
        y0 = models.initial_state(model, 3)
        grid = TimeGrid.uniform(models.default_t_max(problem), 32, 3)
        _, g = gradient_adjoint(model, y0, grid, 8, scheme=scheme)
        ref = gradient_fd_oracle(model, y0, grid, scheme=scheme)
        worst[f"{problem}/{scheme}"] = float(np.max(np.abs(g - ref) / (1.0 + np.abs(ref))))
    elapsed = time.perf_counter() - start
    top = max(worst, key=worst.get)
    detail = f"max component err {worst[top]:.2e} at {top} (limit 1e-4)"
    record(4, "gradient correctness", worst[top] <= 1e-4, detail, elapsed, 120)


def _smooth_states(rng, model, problem):
    y = 0.3 * rng.standard_normal((20, 3, model.n_size))
    if problem == "neuron":
        for gate in (1, 2, 3):
            y[..., gate::4] = rng.uniform(0.05, 0.95, y[..., gate::4].shape)
    if problem == "chaboche":
        y[..., 0] += np.where(np.abs(models.chaboche_yield_margin(model, y)) < 0.1, 0.5, 0.0)
        # include plastic states too
        y[::2, :, 0] += 3.0
    return y


def test_5_jacobian_strategies():
    start = time.perf_counter()
    rng = np.random.default_rng(99)
    worst_ad, worst_fd = 0.0, 0.0
    for problem in models.PROBLEMS:
        model = models.build(problem, 3, 3)
        y = _smooth_states(rng, model, problem)
        t = rng.uniform(0.0, 2.0, y.shape[:-1])
        for c in range(y.shape[0]):
            ref = jacobian_state(model, t[c], y[c], "analytic")
            scale = 1.0 + np.max(np.abs(ref))
            worst_ad = max(worst_ad, float(np.max(np.abs(jacobian_state(model, t[c], y[c], "forward_ad") - ref)) / scale))
            worst_fd = max(worst_fd, float(np.max(np.abs(jacobian_state(model, t[c], y[c], "finite_difference") - ref)) / scale))
    elapsed = time.perf_counter() - start
    detail = f"forward AD err {worst_ad:.1e} (limit 1e-12), FD err {worst_fd:.1e} (limit 1e-5)"
    record(5, "Jacobian strategies", worst_ad <= 1e-12 and worst_fd <= 1e-5, detail, elapsed, 30)


def test_6_scaling_trend():
    start = time.perf_counter()
    results = {}
    for n_chunk in (1, 100):
        config = TrialConfig("chaboche", 3, 10, 2000, n_chunk, gradient="adjoint", integration="backward")
        results[n_chunk] = run_trial(config)[-1]
    seq, chunked = results[1], results[100]
    elapsed = time.perf_counter() - start
    ok = (
        seq.status == chunked.status == "ok"
        and chunked.total_seconds < seq.total_seconds
        and chunked.newton_iterations * 10 <= seq.newton_iterations
    )
    detail = (
        f"wall {seq.total_seconds:.3f} s -> {chunked.total_seconds:.3f} s, "
        f"Newton iterations {seq.newton_iterations} -> {chunked.newton_iterations}"
    )
    record(6, "scaling trend", ok, detail, elapsed, 600)


def test_7_pcr_work_accounting():
    start = time.perf_counter()
    mismatches = []
    for n_chunk in range(1, 34):
        system, rhs = random_system(np.random.default_rng(n_chunk), n_chunk, 2, 2)
        stats = linalg.SolveStats()
        linalg.solve_pcr(system, rhs, stats=stats)
        want = sum(e for e in range(n_chunk.bit_length()) if n_chunk >> e & 1)
        if stats.sweeps != want:
            mismatches.append((n_chunk, stats.sweeps, want))
    elapsed = time.perf_counter() - start
    record(7, "PCR work accounting", not mismatches, f"{33 - len(mismatches)}/33 sweep counts equal sum of exponents", elapsed, 5)


EXPECTED_HEADER = (
    "problem,n_unit,n_size,n_batch,n_time,n_chunk,jacobian,gradient,solver,integration,repeat,"
    "forward_s,backward_s,total_s,loss,grad_norm,newton_iterations,rate_evals,jacobian_evals,"
    "linear_solves,status"
)


def test_8_benchmark_determinism(tmp_path):
    start = time.perf_counter()
    grid = tmp_path / "grid.txt"
    grid.write_text(
        "# desk-scale study\n"
        "problem = mds, neuron, chaboche, node\n"
        "n_unit = 2\n"
        "n_batch = 3\n"
        "n_time = 40\n"
        "n_chunk = 1, 8\n"
        "solver = thomas, pcr\n"
        "repeats = 2\n"
    )
    outputs = []
    codes = []
    for name in ("first.csv", "second.csv"):
        out = tmp_path / name
        codes.append(cli.main(["study", "--grid", str(grid), "--out", str(out)]))
        outputs.append(out.read_bytes().decode("utf-8").split("\n"))
    timing = {"forward_s", "backward_s", "total_s"}
    columns = EXPECTED_HEADER.split(",")
    keep = [i for i, c in enumerate(columns) if c not in timing]

    def values(lines):
        return [[row.split(",")[i] for i in keep] for row in lines[1:] if row]

    header_ok = all(lines[0] == EXPECTED_HEADER for lines in outputs)
    same = values(outputs[0]) == values(outputs[1])
    rows = len(values(outputs[0]))
    elapsed = time.perf_counter() - start
    ok = header_ok and same and codes == [0, 0] and rows == 16 * 3
    record(8, "benchmark determinism", ok, f"header exact={header_ok}, {rows} rows identical={same}", elapsed, 60)


if __name__ == "__main__":
    import pytest

    raise SystemExit(pytest.main([__file__, "-q"]))
