import numpy as np
import pytest

from chunkode import _backend, linalg


@pytest.fixture(params=_backend.available())
def backend(request):
    """Run the test once per available kernel backend."""
    with _backend.using(request.param):
        yield request.param


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def random_system(rng, n_chunk, n_batch, n_size, shift=3.0):
    diag = rng.standard_normal((n_chunk, n_batch, n_size, n_size)) + shift * np.eye(n_size)
    offdiag = rng.standard_normal((n_chunk - 1, n_batch, n_size, n_size))
    rhs = rng.standard_normal((n_chunk, n_batch, n_size))
    return linalg.BlockBidiagonalSystem(diag, offdiag), rhs


def rel_err(a, b):
    return float(np.max(np.abs(a - b)) / max(np.max(np.abs(b)), 1e-300))


def pytest_terminal_summary(terminalreporter):
    import sys

    module = sys.modules.get("test_acceptance")
    verdicts = getattr(module, "VERDICTS", None)
    if not verdicts:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(verdicts):
        terminalreporter.write_line(verdicts[number])
