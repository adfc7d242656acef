"""Pure-NumPy implementation of the hot numerical kernels.

This is the reference backend: the compiled extension in ``_kernels.pyx``
implements the same three functions with the same algorithm (Kronecker
vectorization of the Lyapunov equation, dense LAPACK solve). Either backend
may be active at runtime; see ``mtctrl._backend``.
"""

import numpy as np

BACKEND_NAME = "python"


def solve_lyapunov(A, M):
    """Solve A P + P A^T + M = 0 by Kronecker vectorization.

    No stability or symmetry checks here; callers are responsible for the
    Hurwitz precondition. Raises ``numpy.linalg.LinAlgError`` when the
    Kronecker matrix is singular to working precision.
    """
    A = np.ascontiguousarray(A, dtype=float)
    n = A.shape[0]
    eye = np.eye(n)
    K = np.kron(eye, A) + np.kron(A, eye)
    vec = np.linalg.solve(K, -np.asarray(M, dtype=float).reshape(-1, order="F"))
    P = vec.reshape((n, n), order="F")
    return 0.5 * (P + P.T)


def _error_blocks(Ai, Bi, Ci, AL, B, C):
    n = Ai.shape[0]
    N = AL.shape[0]
    m = Bi.shape[1]
    p = Ci.shape[0]
    Ae = np.zeros((n + N, n + N))
    Ae[:n, :n] = Ai
    Ae[n:, n:] = AL
    Be = np.zeros((n + N, m))
    Be[:n] = Bi
    Be[n:] = B
    Ce = np.zeros((p, n + N))
    Ce[:, :n] = Ci
    Ce[:, n:] = -C
    return Ae, Be, Ce


def task_h2_cost(Ai, Bi, Ci, AL, B, C):
    """Squared H2 norm of the (desired - approximating) error system.

    Assumes both ``Ai`` and ``AL`` are Hurwitz.
    """
    Ae, Be, Ce = _error_blocks(Ai, Bi, Ci, AL, B, C)
    P = solve_lyapunov(Ae, Be @ Be.T)
    return float(np.einsum("ij,jk,ik->", Ce, P, Ce))


def task_h2_cost_grad(Ai, Bi, Ci, AL, B, C):
    """Cost plus the Gramian-block factors of its gradient for one task.

    Returns ``(cost, G, gB, gC)`` where ``G = Q12^T P12 + Q22 P22`` is the
    shared factor of the connectivity and gain gradients, and ``gB``/``gC``
    are the full per-task input/output-map gradients.
    """
    Ae, Be, Ce = _error_blocks(Ai, Bi, Ci, AL, B, C)
    P = solve_lyapunov(Ae, Be @ Be.T)
    Q = solve_lyapunov(Ae.T, Ce.T @ Ce)
    n = Ai.shape[0]
    P12 = P[:n, n:]
    P22 = P[n:, n:]
    Q12 = Q[:n, n:]
    Q22 = Q[n:, n:]
    G = Q12.T @ P12 + Q22 @ P22
    gB = 2.0 * (Q12.T @ Bi + Q22 @ B)
    gC = 2.0 * (-Ci @ P12 + C @ P22)
    cost = float(np.einsum("ij,jk,ik->", Ce, P, Ce))
    return cost, G, gB, gC
