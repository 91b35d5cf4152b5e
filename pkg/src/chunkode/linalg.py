"""Batched, blocked, lower-bidiagonal linear solvers.

Systems have the form::

    | A_1                 | | x_1 |   | y_1 |
    | B_1  A_2            | | x_2 |   | y_2 |
    |      B_2  A_3       | | x_3 | = | y_3 |
    |           ...  ...  | | ... |   | ... |
    |           B_n-1 A_n | | x_n |   | y_n |

stored as ``diag`` with shape ``(n_chunk, n_batch, n_size, n_size)`` and
``offdiag`` with shape ``(n_chunk - 1, n_batch, n_size, n_size)``.  Right hand
sides and solutions are ``(n_chunk, n_batch, n_size)`` arrays.

Three solvers share one diagonal factorization: Thomas's forward
substitution, parallel cyclic reduction (PCR) and a hybrid that stops PCR
after a fixed number of sweeps.  A dense assembly solve is provided as a test
oracle.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from chunkode import _backend

#: Relative pivot threshold below which a diagonal block counts as singular.
PIVOT_TOL = 1e-14

#: Largest assembled dimension ``n_chunk * n_size`` the dense oracle accepts.
DENSE_LIMIT = 512


class SingularBlock(np.linalg.LinAlgError):
    """A diagonal block is numerically singular."""

    def __init__(self, chunk_index, batch_index):
        self.chunk_index = chunk_index
        self.batch_index = batch_index
        super().__init__(f"singular diagonal block at chunk {chunk_index}, batch {batch_index}")


class SizeGuardError(ValueError):
    pass


@dataclass(frozen=True)
class BlockBidiagonalSystem:
    diag: np.ndarray
    offdiag: np.ndarray

    def __post_init__(self):
        diag = np.asarray(self.diag, dtype=np.float64)
        offdiag = np.asarray(self.offdiag, dtype=np.float64)
        if diag.ndim != 4 or diag.shape[2] != diag.shape[3]:
            raise ValueError(f"diag must be (n_chunk, n_batch, n, n), got {diag.shape}")
        if min(diag.shape) < 1:
            raise ValueError("all system dimensions must be at least 1")
        want = (diag.shape[0] - 1,) + diag.shape[1:]
        if offdiag.shape != want:
            raise ValueError(f"offdiag must have shape {want}, got {offdiag.shape}")
        object.__setattr__(self, "diag", diag)
        object.__setattr__(self, "offdiag", offdiag)

    @property
    def n_chunk(self):
        return self.diag.shape[0]

    @property
    def n_batch(self):
        return self.diag.shape[1]

    @property
    def n_size(self):
        return self.diag.shape[2]

    @property
    def shape(self):
        """Shape of conforming right hand sides."""
        return self.diag.shape[:3]

    def matvec(self, x):
        """Apply the operator to ``x`` of shape ``(n_chunk, n_batch, n_size)``."""
        y = np.einsum("cbij,cbj->cbi", self.diag, x)
        y[1:] += np.einsum("cbij,cbj->cbi", self.offdiag, x[:-1])
        return y

    def transpose_blocks(self):
        """Same structure with every block transposed in place."""
        return BlockBidiagonalSystem(self.diag.swapaxes(-1, -2), self.offdiag.swapaxes(-1, -2))

    def to_dense(self):
        """Assemble the full ``(n_batch, N, N)`` matrices, ``N = n_chunk * n_size``."""
        nc, nb, n = self.shape
        dense = np.zeros((nb, nc, n, nc, n))
        for k in range(nc):
            dense[:, k, :, k, :] = self.diag[k]
            if k > 0:
                dense[:, k, :, k - 1, :] = self.offdiag[k - 1]
        return dense.reshape(nb, nc * n, nc * n)


@dataclass(frozen=True)
class DiagonalFactorization:
    """Pivoted LU factors of every diagonal block.

    ``lu`` has the shape of the diagonal blocks, ``piv`` drops the last axis.
    """

    lu: np.ndarray
    piv: np.ndarray

    def solve(self, rhs, rows=slice(None)):
        """Apply ``A_k^{-1}`` for the chunk rows selected by ``rows``.

        ``rhs`` is either a stack of vectors ``(k, n_batch, n)`` or of
        matrices ``(k, n_batch, n, r)``.
        """
        lu = self.lu[rows]
        piv = self.piv[rows]
        n = lu.shape[-1]
        vector = rhs.ndim == lu.ndim - 1
        b = rhs[..., None] if vector else rhs
        x = _backend.kernels.lu_solve(
            lu.reshape(-1, n, n), piv.reshape(-1, n), b.reshape(-1, n, b.shape[-1])
        )
        x = x.reshape(b.shape)
        return x[..., 0] if vector else x


@dataclass
class SolveStats:
    """Instrumentation filled in by the PCR and hybrid solvers."""

    sweeps: int = 0
    partitions: list = field(default_factory=list)


def factor_diagonal_blocks(system):
    """Factor all ``n_chunk * n_batch`` diagonal blocks independently.

    Raises
    ------
    SingularBlock
        If a pivot falls below ``PIVOT_TOL`` times the block's max-norm.
    """
    nc, nb, n = system.shape
    lu, piv, bad = _backend.kernels.lu_factor(system.diag.reshape(nc * nb, n, n), PIVOT_TOL)
    if bad >= 0:
        raise SingularBlock(*divmod(int(bad), nb))
    return DiagonalFactorization(lu.reshape(nc, nb, n, n), piv.reshape(nc, nb, n))


def _check_rhs(system, rhs):
    rhs = np.asarray(rhs, dtype=np.float64)
    if rhs.shape != system.shape:
        raise ValueError(f"rhs shape {rhs.shape} does not match system {system.shape}")
    return rhs


def solve_thomas(system, rhs, factorization=None):
    """Forward substitution, ``x_{k+1} = A_{k+1}^{-1} (y_{k+1} - B_k x_k)``."""
    rhs = _check_rhs(system, rhs)
    fac = factorization or factor_diagonal_blocks(system)
    return _backend.kernels.thomas(fac.lu, fac.piv, system.offdiag, rhs)


def power_of_two_partitions(n):
    """Split ``n`` into its binary digits, largest first: ``7 -> [4, 2, 1]``."""
    return [1 << e for e in range(n.bit_length() - 1, -1, -1) if n >> e & 1]


def _reduce_partition(fac, lo, coupling, y, max_sweeps):
    """Cyclic reduction sweeps on one power-of-two partition.

    ``coupling[k]`` multiplies ``x[k - stride]`` in row ``k`` (zero for
    ``k < stride``).  Arrays are modified in place; returns the number of
    sweeps done.
    """
    size = y.shape[0]
    stride = 1
    sweeps = 0
    while stride < size and sweeps < max_sweeps:
        rows = slice(lo, lo + size - stride)
        prev_y = fac.solve(y[:-stride], rows)
        prev_c = fac.solve(coupling[:-stride], rows)
        y[stride:] -= np.einsum("cbij,cbj->cbi", coupling[stride:], prev_y)
        coupling[stride:] = -np.einsum("cbij,cbjk->cbik", coupling[stride:], prev_c)
        stride *= 2
        sweeps += 1
    return sweeps


def _strided_thomas(fac, lo, coupling, y, stride):
    """Solve the ``stride`` interleaved subsystems left after reduction.

    Rows ``m * stride + j`` for fixed ``j`` form one bidiagonal system, so a
    reshape to ``(size / stride, stride * n_batch, ...)`` turns the set into
    a single batched Thomas solve.
    """
    size, nb, n = y.shape
    m = size // stride
    lu = fac.lu[lo : lo + size].reshape(m, stride * nb, n, n)
    piv = fac.piv[lo : lo + size].reshape(m, stride * nb, n)
    off = coupling.reshape(m, stride * nb, n, n)[1:]
    x = _backend.kernels.thomas(lu, piv, off, y.reshape(m, stride * nb, n))
    return x.reshape(size, nb, n)


def _partitioned_solve(system, rhs, n_switch, factorization, stats):
    rhs = _check_rhs(system, rhs)
    fac = factorization or factor_diagonal_blocks(system)
    stats = stats if stats is not None else SolveStats()
    x = np.empty_like(rhs)
    lo = 0
    for size in power_of_two_partitions(system.n_chunk):
        hi = lo + size
        y = rhs[lo:hi].copy()
        if lo > 0:
            y[0] -= np.einsum("bij,bj->bi", system.offdiag[lo - 1], x[lo - 1])
        coupling = np.zeros((size,) + system.diag.shape[1:])
        coupling[1:] = system.offdiag[lo : hi - 1]
        sweeps = _reduce_partition(fac, lo, coupling, y, n_switch)
        stats.sweeps += sweeps
        stats.partitions.append((size, sweeps))
        x[lo:hi] = _strided_thomas(fac, lo, coupling, y, 1 << sweeps)
        lo = hi
    return x


def solve_pcr(system, rhs, factorization=None, stats=None):
    """Parallel cyclic reduction.

    ``n_chunk`` is split into a sum of powers of two; each contiguous
    partition is reduced to block-diagonal form (``log2(size)`` sweeps) after
    the coupling to the previous, already solved partition is moved to the
    right hand side.
    """
    return _partitioned_solve(system, rhs, np.inf, factorization, stats)


def solve_hybrid(system, rhs, n_switch, factorization=None, stats=None):
    """PCR for at most ``n_switch`` sweeps per partition, then Thomas."""
    if n_switch < 0:
        raise ValueError("n_switch must be non-negative")
    return _partitioned_solve(system, rhs, n_switch, factorization, stats)


def solve_dense_oracle(system, rhs):
    """Assemble the full matrix and solve it densely.  Testing only."""
    rhs = _check_rhs(system, rhs)
    nc, nb, n = system.shape
    if nc * n > DENSE_LIMIT:
        raise SizeGuardError(f"n_chunk * n_size = {nc * n} exceeds {DENSE_LIMIT}")
    dense = system.to_dense()
    b = rhs.transpose(1, 0, 2).reshape(nb, nc * n, 1)
    x = np.linalg.solve(dense, b)
    return x.reshape(nb, nc, n).transpose(1, 0, 2)


def get_solver(name, n_switch=1):
    """Return ``solve(system, rhs)`` for ``thomas``, ``pcr`` or ``hybrid``."""
    if name == "thomas":
        return solve_thomas
    if name == "pcr":
        return solve_pcr
    if name == "hybrid":
        return lambda system, rhs: solve_hybrid(system, rhs, n_switch)
    raise ValueError(f"unknown solver {name!r}")
