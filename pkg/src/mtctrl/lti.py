"""Continuous-time LTI numerics: Gramians, norms, balancing, LQR, interconnection.

Everything here operates on strictly proper systems (A, B, C); there is no
feedthrough term anywhere in this package. All functions are pure.
"""

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from ._backend import kernels
from .errors import (
    BracketFailure,
    DegenerateGramian,
    DimensionMismatch,
    EigFailure,
    NotHurwitz,
    NotSiso,
    NotStabilizable,
    SolveFailure,
)

LYAP_RESIDUAL_RTOL = 1e-9
CARE_RESIDUAL_TOL = 1e-8


def _as_state_matrix(A):
    A = np.atleast_2d(np.asarray(A, dtype=float))
    if A.shape[0] != A.shape[1]:
        raise DimensionMismatch(f"A must be square, got shape {A.shape}")
    return A


def _as_input_matrix(B, n):
    B = np.asarray(B, dtype=float)
    if B.ndim == 0:
        B = B.reshape(1, 1)
    elif B.ndim == 1:
        B = B.reshape(-1, 1)
    if B.shape[0] != n:
        raise DimensionMismatch(f"B must have {n} rows, got shape {B.shape}")
    return B


def _as_output_matrix(C, n):
    C = np.asarray(C, dtype=float)
    if C.ndim == 0:
        C = C.reshape(1, 1)
    elif C.ndim == 1:
        C = C.reshape(1, -1)
    if C.shape[1] != n:
        raise DimensionMismatch(f"C must have {n} columns, got shape {C.shape}")
    return C


@dataclass(frozen=True)
class StateSpace:
    """A continuous-time LTI triple (A, B, C), strictly proper.

    Scalars and 1-d arrays are coerced: a 1-d ``B`` becomes a column,
    a 1-d ``C`` a row, so ``StateSpace(-1, 1, 2)`` is the scalar system
    with a = -1, b = 1, c = 2.
    """

    A: np.ndarray
    B: np.ndarray
    C: np.ndarray

    def __post_init__(self):
        A = _as_state_matrix(self.A)
        B = _as_input_matrix(self.B, A.shape[0])
        C = _as_output_matrix(self.C, A.shape[0])
        for name, mat in (("A", A), ("B", B), ("C", C)):
            if not np.all(np.isfinite(mat)):
                raise ValueError(f"{name} contains non-finite entries")
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "B", B)
        object.__setattr__(self, "C", C)

    @property
    def n(self):
        return self.A.shape[0]

    @property
    def m(self):
        return self.B.shape[1]

    @property
    def p(self):
        return self.C.shape[0]

    @property
    def is_siso(self):
        return self.m == 1 and self.p == 1


@dataclass(frozen=True)
class BalancedRealization:
    """A balanced minimal realization together with its Hankel singular values.

    Both Gramians of ``sys`` equal ``diag(hankel)`` up to numerical tolerance;
    ``hankel`` is strictly positive and sorted descending.
    """

    sys: StateSpace
    hankel: np.ndarray = field(repr=False)

    @property
    def order(self):
        return self.sys.n


def spectral_abscissa(A):
    """Largest real part of the eigenvalues of ``A``."""
    A = _as_state_matrix(A)
    try:
        ev = np.linalg.eigvals(A)
    except np.linalg.LinAlgError as exc:
        raise EigFailure(str(exc)) from exc
    return float(np.max(ev.real))


def _require_hurwitz(A, what="A"):
    sa = spectral_abscissa(A)
    if sa >= 0.0:
        raise NotHurwitz(f"{what} has spectral abscissa {sa:.6g} >= 0")
    return sa


def solve_lyapunov(A, M):
    """Solve A P + P A^T + M = 0 for symmetric P.

    ``A`` must be Hurwitz and ``M`` symmetric. The solve uses dense
    Kronecker vectorization, adequate for the desk-scale systems this
    package targets. The returned P is symmetrized and its residual is
    guaranteed below ``1e-9 * max(1, ||M||_F)``.
    """
    A = _as_state_matrix(A)
    M = _as_state_matrix(M)
    if M.shape != A.shape:
        raise DimensionMismatch(f"M must match A, got {M.shape} vs {A.shape}")
    if not np.allclose(M, M.T, rtol=0.0, atol=1e-12 * max(1.0, np.abs(M).max())):
        raise ValueError("M must be symmetric")
    _require_hurwitz(A)
    try:
        P = kernels.solve_lyapunov(A, M)
    except np.linalg.LinAlgError as exc:
        raise SolveFailure(f"Lyapunov solve singular: {exc}") from exc
    mnorm = np.linalg.norm(M)
    residual = np.linalg.norm(A @ P + P @ A.T + M)
    if residual > LYAP_RESIDUAL_RTOL * max(1.0, mnorm):
        raise SolveFailure(
            f"Lyapunov residual {residual:.3e} exceeds {LYAP_RESIDUAL_RTOL:.0e}*max(1,||M||)"
        )
    return P


def gramians(sys):
    """Controllability and observability Gramians (P, Q) of a Hurwitz system."""
    P = solve_lyapunov(sys.A, sys.B @ sys.B.T)
    Q = solve_lyapunov(sys.A.T, sys.C.T @ sys.C)
    return P, Q


def h2_norm_sq(sys):
    """Squared H2 norm, tr(C P C^T). Raises NotHurwitz for unstable systems."""
    P = solve_lyapunov(sys.A, sys.B @ sys.B.T)
    return float(np.einsum("ij,jk,ik->", sys.C, P, sys.C))


def _hankel_values(sys):
    P, Q = gramians(sys)
    ev = np.linalg.eigvals(P @ Q)
    return np.sqrt(np.clip(ev.real, 0.0, None))


def _has_imaginary_eigenvalue(A, B, C, gamma):
    n = A.shape[0]
    H = np.zeros((2 * n, 2 * n))
    H[:n, :n] = A
    H[:n, n:] = (B @ B.T) / gamma
    H[n:, :n] = -(C.T @ C) / gamma
    H[n:, n:] = -A.T
    ev = np.linalg.eigvals(H)
    return bool(np.any(np.abs(ev.real) <= 1e-8 * (1.0 + np.abs(ev))))


def hinf_norm(sys, tol=1e-6):
    """H-infinity norm by gamma-bisection on the Hamiltonian eigenvalue test.

    The bracket starts at the DC gain (lower) and twice the Hankel-value sum
    (upper, inflated marginally since scalar systems attain it exactly).
    The result is within ``tol`` relative of the true norm.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    _require_hurwitz(sys.A)
    lo = float(
        np.linalg.norm(sys.C @ np.linalg.solve(-sys.A, sys.B), 2)
    )  # sigma_max at omega = 0
    up = 2.0 * float(np.sum(_hankel_values(sys)))
    if up <= 0.0:
        return 0.0
    up *= 1.0 + max(10.0 * tol, 1e-6)
    for _ in range(8):
        if not _has_imaginary_eigenvalue(sys.A, sys.B, sys.C, up):
            break
        up *= 2.0
    else:
        raise BracketFailure(
            f"upper bracket {up:.6g} still attains the H-infinity level"
        )
    lo = min(lo, up)
    while up - lo > tol * max(lo, 1e-300):
        gamma = 0.5 * (lo + up)
        if _has_imaginary_eigenvalue(sys.A, sys.B, sys.C, gamma):
            lo = gamma
        else:
            up = gamma
    return 0.5 * (lo + up)


def rk4_step_matrix(A, h):
    """One-step propagator of classical RK4 for xdot = A x (4th-order Taylor)."""
    M1 = h * A
    M2 = M1 @ M1 / 2.0
    M3 = M1 @ M2 / 3.0
    M4 = M1 @ M3 / 4.0
    return np.eye(A.shape[0]) + M1 + M2 + M3 + M4


_SUBSTEPS_PER_UNIT_TIME = 100
_SUBSTEPS_PER_NORM = 128  # keeps the 4th-order step error near 1e-10 at t ~ 5


def impulse_response(sys, t_grid):
    """Impulse response g(t) = C e^{At} B on an ascending grid of times.

    The matrix-exponential action is propagated with fixed-step RK4, at
    least 100 substeps per unit time (denser for large ||A||). Returns an
    array of shape ``(len(t_grid), p, m)``.
    """
    t = np.asarray(t_grid, dtype=float)
    if t.ndim != 1 or t.size == 0:
        raise ValueError("t_grid must be a non-empty 1-d array")
    if t[0] < 0.0 or np.any(np.diff(t) < 0.0):
        raise ValueError("t_grid must be nonnegative and ascending")
    density = max(
        _SUBSTEPS_PER_UNIT_TIME, _SUBSTEPS_PER_NORM * float(np.linalg.norm(sys.A, 2))
    )
    out = np.empty((t.size, sys.p, sys.m))
    X = sys.B.copy()
    prev = 0.0
    step_cache = {}
    for k, tk in enumerate(t):
        delta = tk - prev
        if delta > 0.0:
            nsub = max(1, int(np.ceil(delta * density)))
            key = (delta, nsub)
            if key not in step_cache:
                step_cache[key] = rk4_step_matrix(sys.A, delta / nsub)
            Phi = step_cache[key]
            for _ in range(nsub):
                X = Phi @ X
        out[k] = sys.C @ X
        prev = tk
    return out


def l1_norm(sys, t_max=None, dt=None):
    """L1 norm of a SISO impulse response by trapezoidal quadrature.

    Defaults: ``t_max = 40 / |spectral abscissa|`` and a step giving at
    least 10^4 samples. Verification-oracle quality, not production model
    reduction.
    """
    if not sys.is_siso:
        raise NotSiso(f"l1_norm requires SISO, got m={sys.m}, p={sys.p}")
    sa = _require_hurwitz(sys.A)
    if t_max is None:
        t_max = 40.0 / abs(sa)
    if dt is None:
        dt = t_max / 10_000.0
    if t_max <= 0 or dt <= 0:
        raise ValueError("t_max and dt must be positive")
    n_steps = int(np.ceil(t_max / dt))
    t = dt * np.arange(n_steps + 1)
    g = impulse_response(sys, t)[:, 0, 0]
    return float(np.trapezoid(np.abs(g), dx=dt))


def balanced_minimal_realization(sys, rank_tol=1e-10):
    """Square-root balancing with truncation of numerically zero Hankel values.

    Gramian factors come from symmetric eigendecompositions (tolerant to
    semidefinite Gramians of non-minimal systems); states with
    ``sigma_k <= rank_tol * sigma_1`` are discarded, which defines the
    numerical order of the returned realization.
    """
    if not 0.0 < rank_tol < 1.0:
        raise ValueError("rank_tol must lie in (0, 1)")
    P, Q = gramians(sys)
    Lp = _psd_factor(P, "controllability")
    Lq = _psd_factor(Q, "observability")
    U, s, Vt = np.linalg.svd(Lq.T @ Lp)
    if s.size == 0 or s[0] <= 0.0:
        empty = StateSpace(
            np.zeros((0, 0)), np.zeros((0, sys.m)), np.zeros((sys.p, 0))
        )
        return BalancedRealization(sys=empty, hankel=np.zeros(0))
    R = int(np.count_nonzero(s > rank_tol * s[0]))
    sr = s[:R]
    scale = 1.0 / np.sqrt(sr)
    T = Lp @ (Vt[:R].T * scale)
    Ti = (U[:, :R] * scale).T @ Lq.T
    bal = StateSpace(Ti @ sys.A @ T, Ti @ sys.B, sys.C @ T)
    return BalancedRealization(sys=bal, hankel=sr.copy())


def _psd_factor(P, what):
    lam, V = np.linalg.eigh(0.5 * (P + P.T))
    floor = -1e-8 * max(1.0, float(lam[-1]))
    if lam[0] < floor:
        raise DegenerateGramian(
            f"{what} Gramian indefinite: min eigenvalue {lam[0]:.3e}"
        )
    return V * np.sqrt(np.clip(lam, 0.0, None))


def lqr(A, B, Qw, Rw):
    """Continuous-time LQR via the stable invariant subspace of the Hamiltonian.

    Returns ``(K, P)`` with ``K = Rw^{-1} B^T P`` and ``P`` the stabilizing
    CARE solution. Raises NotStabilizable when the Hamiltonian has no stable
    subspace of full dimension or the closed loop fails to be Hurwitz.
    """
    A = _as_state_matrix(A)
    n = A.shape[0]
    B = _as_input_matrix(B, n)
    Qw = _as_state_matrix(Qw)
    Rw = np.atleast_2d(np.asarray(Rw, dtype=float))
    if Qw.shape != (n, n):
        raise DimensionMismatch(f"Qw must be {n}x{n}")
    if Rw.shape != (B.shape[1], B.shape[1]):
        raise DimensionMismatch("Rw must be m x m")
    BRinvBT = B @ np.linalg.solve(Rw, B.T)
    H = np.block([[A, -BRinvBT], [-Qw, -A.T]])
    try:
        _, Z, sdim = scipy.linalg.schur(H, output="real", sort="lhp")
    except np.linalg.LinAlgError as exc:
        raise EigFailure(str(exc)) from exc
    if sdim != n:
        raise NotStabilizable(
            f"stable invariant subspace has dimension {sdim}, expected {n}"
        )
    X = Z[:n, :n]
    Y = Z[n:, :n]
    try:
        P = np.linalg.solve(X.T, Y.T).T
    except np.linalg.LinAlgError as exc:
        raise NotStabilizable("singular subspace basis") from exc
    P = 0.5 * (P + P.T)
    K = np.linalg.solve(Rw, B.T @ P)
    residual = np.linalg.norm(A.T @ P + P @ A - P @ BRinvBT @ P + Qw)
    scale = max(1.0, np.linalg.norm(Qw), np.linalg.norm(P @ BRinvBT @ P))
    if residual > CARE_RESIDUAL_TOL * scale:
        raise NotStabilizable(f"CARE residual {residual:.3e} too large")
    if spectral_abscissa(A - B @ K) >= 0.0:
        raise NotStabilizable("closed loop A - B K is not Hurwitz")
    return K, P


def negative_feedback(plant, controller):
    """Close the loop u_plant = -y_controller + w; output is the plant output.

    State is stacked [x_plant; x_controller]. Both systems are strictly
    proper so the interconnection is always well posed.
    """
    if plant.p != controller.m or controller.p != plant.m:
        raise DimensionMismatch(
            f"plant (m={plant.m}, p={plant.p}) incompatible with "
            f"controller (m={controller.m}, p={controller.p})"
        )
    n1, n2 = plant.n, controller.n
    A = np.zeros((n1 + n2, n1 + n2))
    A[:n1, :n1] = plant.A
    A[:n1, n1:] = -plant.B @ controller.C
    A[n1:, :n1] = controller.B @ plant.C
    A[n1:, n1:] = controller.A
    B = np.vstack([plant.B, np.zeros((n2, plant.m))])
    C = np.hstack([plant.C, np.zeros((plant.p, n2))])
    return StateSpace(A, B, C)
