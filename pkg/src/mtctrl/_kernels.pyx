# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled implementation of the hot numerical kernels.

Same contracts as ``_kernels_py``: Kronecker-vectorized Lyapunov solves and
the per-task cost/gradient evaluation of the training loop. The gradient
kernel factorizes the Kronecker matrix once and reuses it transposed for
the observability equation.
"""

import numpy as np

cimport numpy as cnp
from libc.string cimport memset
from scipy.linalg.cython_lapack cimport dgesv, dgetrf, dgetrs

cnp.import_array()

BACKEND_NAME = "compiled"


cdef void _fill_kron(double[::1, :] A, double[::1, :] K) noexcept nogil:
    # K = I (x) A + A (x) I for column-major vec(P), K is (n*n) x (n*n)
    cdef Py_ssize_t n = A.shape[0]
    cdef Py_ssize_t i, j, k
    memset(&K[0, 0], 0, n * n * n * n * sizeof(double))
    for j in range(n):
        for k in range(n):
            for i in range(n):
                K[i + n * j, k + n * j] += A[i, k]
    for k in range(n):
        for j in range(n):
            for i in range(n):
                K[i + n * j, i + n * k] += A[j, k]


cdef void _sym_vec_to_matrix(double[::1] vec, double[::1, :] P) noexcept nogil:
    cdef Py_ssize_t n = P.shape[0]
    cdef Py_ssize_t i, j
    cdef double v
    for j in range(n):
        for i in range(n):
            v = 0.5 * (vec[i + n * j] + vec[j + n * i])
            P[i, j] = v


def solve_lyapunov(A, M):
    """Solve A P + P A^T + M = 0 by Kronecker vectorization (LAPACK dgesv)."""
    cdef cnp.ndarray[double, ndim=2, mode="fortran"] Af = np.asfortranarray(A, dtype=np.float64)
    cdef Py_ssize_t n = Af.shape[0]
    cdef cnp.ndarray[double, ndim=2, mode="fortran"] K = np.empty((n * n, n * n), dtype=np.float64, order="F")
    cdef cnp.ndarray[double, ndim=1] rhs = np.asarray(
        -np.asarray(M, dtype=np.float64).reshape(-1, order="F")
    )
    cdef cnp.ndarray[int, ndim=1] ipiv = np.empty(n * n, dtype=np.intc)
    cdef int nn = <int> (n * n), one = 1, info = 0
    _fill_kron(Af, K)
    dgesv(&nn, &one, &K[0, 0], &nn, &ipiv[0], &rhs[0], &nn, &info)
    if info != 0:
        raise np.linalg.LinAlgError(f"dgesv failed with info={info}")
    cdef cnp.ndarray[double, ndim=2, mode="fortran"] P = np.empty((n, n), dtype=np.float64, order="F")
    _sym_vec_to_matrix(rhs, P)
    return np.ascontiguousarray(P)


cdef void _fill_error_system(
    double[::1, :] Ai, double[::1, :] Bi, double[::1, :] Ci,
    double[::1, :] AL, double[::1, :] B, double[::1, :] C,
    double[::1, :] Ae, double[::1, :] Be, double[::1, :] Ce,
) noexcept nogil:
    cdef Py_ssize_t n = Ai.shape[0], N = AL.shape[0]
    cdef Py_ssize_t m = Bi.shape[1], p = Ci.shape[0]
    cdef Py_ssize_t ne = n + N
    cdef Py_ssize_t i, j
    memset(&Ae[0, 0], 0, ne * ne * sizeof(double))
    for j in range(n):
        for i in range(n):
            Ae[i, j] = Ai[i, j]
    for j in range(N):
        for i in range(N):
            Ae[n + i, n + j] = AL[i, j]
    for j in range(m):
        for i in range(n):
            Be[i, j] = Bi[i, j]
        for i in range(N):
            Be[n + i, j] = B[i, j]
    for j in range(n):
        for i in range(p):
            Ce[i, j] = Ci[i, j]
    for j in range(N):
        for i in range(p):
            Ce[i, n + j] = -C[i, j]


cdef void _gram_products(
    double[::1, :] Be, double[::1, :] Ce,
    double[::1, :] BBt, double[::1, :] CtC,
) noexcept nogil:
    cdef Py_ssize_t ne = Be.shape[0], m = Be.shape[1], p = Ce.shape[0]
    cdef Py_ssize_t i, j, k
    cdef double acc
    for j in range(ne):
        for i in range(ne):
            acc = 0.0
            for k in range(m):
                acc += Be[i, k] * Be[j, k]
            BBt[i, j] = acc
            acc = 0.0
            for k in range(p):
                acc += Ce[k, i] * Ce[k, j]
            CtC[i, j] = acc


def _as_f(x):
    return np.asfortranarray(np.atleast_2d(np.asarray(x, dtype=np.float64)))


def task_h2_cost(Ai, Bi, Ci, AL, B, C):
    """Squared H2 norm of the error system for one task (Hurwitz inputs)."""
    cdef cnp.ndarray[double, ndim=2, mode="fortran"] Ai_ = _as_f(Ai), Bi_ = _as_f(Bi), Ci_ = _as_f(Ci)
    cdef cnp.ndarray[double, ndim=2, mode="fortran"] AL_ = _as_f(AL), B_ = _as_f(B), C_ = _as_f(C)
    cdef Py_ssize_t n = Ai_.shape[0], N = AL_.shape[0]
    cdef Py_ssize_t ne = n + N
    cdef cnp.ndarray[double, ndim=2, mode="fortran"] Ae = np.empty((ne, ne), dtype=np.float64, order="F")
    cdef cnp.ndarray[double, ndim=2, mode="fortran"] Be = np.empty((ne, Bi_.shape[1]), dtype=np.float64, order="F")
    cdef cnp.ndarray[double, ndim=2, mode="fortran"] Ce = np.empty((Ci_.shape[0], ne), dtype=np.float64, order="F")
    cdef cnp.ndarray[double, ndim=2, mode="fortran"] BBt = np.empty((ne, ne), dtype=np.float64, order="F")
    cdef cnp.ndarray[double, ndim=2, mode="fortran"] CtC = np.empty((ne, ne), dtype=np.float64, order="F")
    _fill_error_system(Ai_, Bi_, Ci_, AL_, B_, C_, Ae, Be, Ce)
    _gram_products(Be, Ce, BBt, CtC)

    cdef cnp.ndarray[double, ndim=2, mode="fortran"] K = np.empty((ne * ne, ne * ne), dtype=np.float64, order="F")
    cdef cnp.ndarray[double, ndim=1] rhs = np.empty(ne * ne, dtype=np.float64)
    cdef cnp.ndarray[int, ndim=1] ipiv = np.empty(ne * ne, dtype=np.intc)
    cdef int nn = <int> (ne * ne), one = 1, info = 0
    cdef Py_ssize_t i, j
    _fill_kron(Ae, K)
    for j in range(ne):
        for i in range(ne):
            rhs[i + ne * j] = -BBt[i, j]
    dgesv(&nn, &one, &K[0, 0], &nn, &ipiv[0], &rhs[0], &nn, &info)
    if info != 0:
        raise np.linalg.LinAlgError(f"dgesv failed with info={info}")
    # cost = sum_{ij} (C^T C)_{ij} * P_{ij} with P symmetrized
    cdef double cost = 0.0
    for j in range(ne):
        for i in range(ne):
            cost += CtC[i, j] * 0.5 * (rhs[i + ne * j] + rhs[j + ne * i])
    return cost


def task_h2_cost_grad(Ai, Bi, Ci, AL, B, C):
    """(cost, G, gB, gC) for one task; shares one LU between both Gramians."""
    cdef cnp.ndarray[double, ndim=2, mode="fortran"] Ai_ = _as_f(Ai), Bi_ = _as_f(Bi), Ci_ = _as_f(Ci)
    cdef cnp.ndarray[double, ndim=2, mode="fortran"] AL_ = _as_f(AL), B_ = _as_f(B), C_ = _as_f(C)
    cdef Py_ssize_t n = Ai_.shape[0], N = AL_.shape[0]
    cdef Py_ssize_t m = Bi_.shape[1], p = Ci_.shape[0]
    cdef Py_ssize_t ne = n + N
    cdef cnp.ndarray[double, ndim=2, mode="fortran"] Ae = np.empty((ne, ne), dtype=np.float64, order="F")
    cdef cnp.ndarray[double, ndim=2, mode="fortran"] Be = np.empty((ne, m), dtype=np.float64, order="F")
    cdef cnp.ndarray[double, ndim=2, mode="fortran"] Ce = np.empty((p, ne), dtype=np.float64, order="F")
    cdef cnp.ndarray[double, ndim=2, mode="fortran"] BBt = np.empty((ne, ne), dtype=np.float64, order="F")
    cdef cnp.ndarray[double, ndim=2, mode="fortran"] CtC = np.empty((ne, ne), dtype=np.float64, order="F")
    _fill_error_system(Ai_, Bi_, Ci_, AL_, B_, C_, Ae, Be, Ce)
    _gram_products(Be, Ce, BBt, CtC)

    cdef cnp.ndarray[double, ndim=2, mode="fortran"] K = np.empty((ne * ne, ne * ne), dtype=np.float64, order="F")
    cdef cnp.ndarray[double, ndim=1] vp = np.empty(ne * ne, dtype=np.float64)
    cdef cnp.ndarray[double, ndim=1] vq = np.empty(ne * ne, dtype=np.float64)
    cdef cnp.ndarray[int, ndim=1] ipiv = np.empty(ne * ne, dtype=np.intc)
    cdef int nn = <int> (ne * ne), one = 1, info = 0
    cdef Py_ssize_t i, j, k
    _fill_kron(Ae, K)
    for j in range(ne):
        for i in range(ne):
            vp[i + ne * j] = -BBt[i, j]
            vq[i + ne * j] = -CtC[i, j]
    dgetrf(&nn, &nn, &K[0, 0], &nn, &ipiv[0], &info)
    if info != 0:
        raise np.linalg.LinAlgError(f"dgetrf failed with info={info}")
    # K vec(P) = -vec(B B^T);  K^T vec(Q) = -vec(C^T C)
    dgetrs("N", &nn, &one, &K[0, 0], &nn, &ipiv[0], &vp[0], &nn, &info)
    if info != 0:
        raise np.linalg.LinAlgError(f"dgetrs(N) failed with info={info}")
    dgetrs("T", &nn, &one, &K[0, 0], &nn, &ipiv[0], &vq[0], &nn, &info)
    if info != 0:
        raise np.linalg.LinAlgError(f"dgetrs(T) failed with info={info}")

    cdef cnp.ndarray[double, ndim=2, mode="fortran"] P = np.empty((ne, ne), dtype=np.float64, order="F")
    cdef cnp.ndarray[double, ndim=2, mode="fortran"] Q = np.empty((ne, ne), dtype=np.float64, order="F")
    _sym_vec_to_matrix(vp, P)
    _sym_vec_to_matrix(vq, Q)

    cdef double cost = 0.0
    for j in range(ne):
        for i in range(ne):
            cost += CtC[i, j] * P[i, j]

    # G[h,l] = sum_k Q[k, n+h] P[k, n+l]  (the (2,2) block of Q P, Q symmetric)
    cdef cnp.ndarray[double, ndim=2] G = np.empty((N, N), dtype=np.float64)
    cdef cnp.ndarray[double, ndim=2] gB = np.empty((N, m), dtype=np.float64)
    cdef cnp.ndarray[double, ndim=2] gC = np.empty((p, N), dtype=np.float64)
    cdef double acc
    for i in range(N):
        for j in range(N):
            acc = 0.0
            for k in range(ne):
                acc += Q[k, n + i] * P[k, n + j]
            G[i, j] = acc
    # gB = 2 (Q12^T B_i + Q22 B) = 2 Q[:, n:]^T Be
    for i in range(N):
        for j in range(m):
            acc = 0.0
            for k in range(ne):
                acc += Q[k, n + i] * Be[k, j]
            gB[i, j] = 2.0 * acc
    # gC = 2 (-C_i P12 + C P22) = -2 (Ce P)[:, n:]
    for i in range(p):
        for j in range(N):
            acc = 0.0
            for k in range(ne):
                acc += Ce[i, k] * P[k, n + j]
            gC[i, j] = -2.0 * acc
    return cost, G, gB, gC
