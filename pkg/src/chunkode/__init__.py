"""Chunked, batched implicit ODE integration with adjoint gradients.

Time integration is vectorized over independent series (the batch axis) and
over chunks of consecutive backward Euler steps, whose Newton systems are
block-bidiagonal and solved by Thomas's algorithm, parallel cyclic reduction
or a hybrid of the two.
"""

from chunkode._backend import HAS_COMPILED
from chunkode.adjoint import (
    FROBENIUS,
    AdjointState,
    LossSpec,
    adjoint_backward,
    adjoint_chunk_solve,
    adjoint_step_sequential,
    gradient_adjoint,
    gradient_fd_oracle,
    loss_frobenius,
)
from chunkode.integrate import (
    NewtonDivergence,
    NewtonSettings,
    TimeGrid,
    Trajectory,
    WorkCounters,
    integrate,
    integrate_backward_euler,
    integrate_forward_euler,
)
from chunkode.linalg import (
    BlockBidiagonalSystem,
    SingularBlock,
    solve_dense_oracle,
    solve_hybrid,
    solve_pcr,
    solve_thomas,
)
from chunkode.model import JacobianStrategy, OdeModel, jacobian_state, parameter_vjp, rate

__version__ = "0.1.0"
