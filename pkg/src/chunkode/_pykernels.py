"""Pure numpy batched dense kernels.

Fallback for :mod:`chunkode._kernels` when the compiled extension is not
available.  Every routine is vectorized over the leading (stack) axis and
loops only over the block dimension, which is small.

Contracts shared with the compiled module:

``lu_factor(a, tiny) -> (lu, piv, bad)``
    Partial-pivoting LU of a stack ``a`` of shape ``(m, n, n)``.  ``piv[q, k]``
    is the row swapped with row ``k`` at step ``k``.  ``bad`` is the flat index
    of the first block whose pivot falls below ``tiny * max|block|``, or -1.
``lu_solve(lu, piv, b) -> x``
    Solve with a factored stack; ``b`` has shape ``(m, n, r)``.
``thomas(lu, piv, offdiag, rhs) -> x``
    Forward substitution down a block lower-bidiagonal system with factored
    diagonal blocks ``(c, b, n, n)`` and sub-diagonal blocks ``(c-1, b, n, n)``.
"""

import numpy as np


def lu_factor(a, tiny):
    lu = np.array(a, dtype=np.float64, copy=True)
    m, n, _ = lu.shape
    piv = np.zeros((m, n), dtype=np.int_)
    scale = np.abs(lu).reshape(m, -1).max(axis=1, initial=0.0)
    ok = scale > 0.0
    rows = np.arange(m)
    for k in range(n):
        col = np.abs(lu[:, k:, k])
        p = k + np.argmax(col, axis=1)
        piv[:, k] = p
        ok &= col[rows, p - k] >= tiny * scale
        swap = lu[rows, p].copy()
        lu[rows, p] = lu[:, k]
        lu[:, k] = swap
        pivot = lu[:, k, k]
        safe = np.where(pivot == 0.0, 1.0, pivot)
        f = lu[:, k + 1 :, k] / safe[:, None]
        lu[:, k + 1 :, k] = f
        lu[:, k + 1 :, k + 1 :] -= f[:, :, None] * lu[:, None, k, k + 1 :]
    bad = np.flatnonzero(~ok)
    return lu, piv, int(bad[0]) if bad.size else -1


def lu_solve(lu, piv, b):
    x = np.array(b, dtype=np.float64, copy=True)
    m, n, _ = lu.shape
    rows = np.arange(m)
    for k in range(n):
        p = piv[:, k]
        swap = x[rows, p].copy()
        x[rows, p] = x[:, k]
        x[:, k] = swap
    for i in range(1, n):
        x[:, i] -= np.einsum("qj,qjc->qc", lu[:, i, :i], x[:, :i])
    for i in range(n - 1, -1, -1):
        x[:, i] -= np.einsum("qj,qjc->qc", lu[:, i, i + 1 :], x[:, i + 1 :])
        x[:, i] /= lu[:, i, i, None]
    return x


def thomas(lu, piv, offdiag, rhs):
    nc = lu.shape[0]
    x = np.array(rhs, dtype=np.float64, copy=True)
    for k in range(nc):
        if k > 0:
            x[k] -= np.einsum("qij,qj->qi", offdiag[k - 1], x[k - 1])
        x[k] = lu_solve(lu[k], piv[k], x[k][..., None])[..., 0]
    return x
