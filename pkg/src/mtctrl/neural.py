"""The nonlinear neural controller: activations, bias realization, simulation.

The controller is ``xdot = -x + softplus(W x + d) + B u``, ``y = C x``.
Each task is a bias vector ``d`` placing an equilibrium ``x_eq`` whose
linearized dynamics are ``(-I + diag(dbar) W, B, C)`` with the sigmoid
values ``dbar`` in (0,1)^N. Any diagonal target in (0,1)^N is exactly
realizable by a closed-form choice of ``d``.
"""

from dataclasses import dataclass, field

import numpy as np
import scipy.special

from .errors import DimensionMismatch, DomainError, NoConvergence, NonFinite
from .lti import StateSpace

FIXED_POINT_TOL = 1e-12
DIVERGENCE_NORM = 1e12


def softplus(x):
    """Overflow-safe ln(1 + e^x), elementwise."""
    return np.logaddexp(0.0, np.asarray(x, dtype=float))


def sigmoid(x):
    """Logistic function 1 / (1 + e^{-x}), the derivative of softplus."""
    return scipy.special.expit(np.asarray(x, dtype=float))


def logit(y):
    """Inverse of sigmoid; defined for y strictly inside (0, 1)."""
    y = np.asarray(y, dtype=float)
    if np.any(y <= 0.0) or np.any(y >= 1.0):
        raise DomainError("logit requires values strictly inside (0, 1)")
    return scipy.special.logit(y)


@dataclass(frozen=True)
class TaskBias:
    """Per-task bias: target sigmoid diagonal, bias vector, and equilibrium."""

    dbar: np.ndarray
    d: np.ndarray
    x_eq: np.ndarray

    def __post_init__(self):
        for name in ("dbar", "d", "x_eq"):
            v = np.asarray(getattr(self, name), dtype=float).reshape(-1)
            if not np.all(np.isfinite(v)):
                raise ValueError(f"{name} contains non-finite entries")
            object.__setattr__(self, name, v)
        if not (self.dbar.size == self.d.size == self.x_eq.size):
            raise DimensionMismatch("dbar, d, x_eq must have equal length")
        if np.any(self.dbar <= 0.0) or np.any(self.dbar >= 1.0):
            raise DomainError("dbar entries must lie strictly in (0, 1)")


@dataclass(frozen=True)
class NeuralController:
    """Connectivity W, maps B and C, and a bank of task biases."""

    W: np.ndarray
    B: np.ndarray
    C: np.ndarray
    tasks: tuple = field(default_factory=tuple)

    def __post_init__(self):
        W = np.atleast_2d(np.asarray(self.W, dtype=float))
        if W.shape[0] != W.shape[1]:
            raise DimensionMismatch("W must be square")
        N = W.shape[0]
        B = np.asarray(self.B, dtype=float)
        if B.ndim <= 1:
            B = B.reshape(N, -1) if B.size else B.reshape(N, 0)
        C = np.asarray(self.C, dtype=float)
        if C.ndim <= 1:
            C = C.reshape(-1, N)
        if B.shape[0] != N or C.shape[1] != N:
            raise DimensionMismatch("B must be N x m and C must be p x N")
        for name, mat in (("W", W), ("B", B), ("C", C)):
            if not np.all(np.isfinite(mat)):
                raise ValueError(f"{name} contains non-finite entries")
        object.__setattr__(self, "W", W)
        object.__setattr__(self, "B", B)
        object.__setattr__(self, "C", C)
        object.__setattr__(self, "tasks", tuple(self.tasks))
        for t in self.tasks:
            if t.dbar.size != N:
                raise DimensionMismatch("task bias length must equal N")

    @property
    def N(self):
        return self.W.shape[0]

    @property
    def m(self):
        return self.B.shape[1]

    @property
    def p(self):
        return self.C.shape[0]


def realize_bias(W, dbar):
    """Closed-form (x_eq, d) realizing a target sigmoid diagonal ``dbar``.

    With z = logit(dbar): x_eq = softplus(z) and d = z - W x_eq, so that
    x_eq = softplus(W x_eq + d) and sigmoid(W x_eq + d) = dbar hold exactly.
    """
    W = np.atleast_2d(np.asarray(W, dtype=float))
    dbar = np.asarray(dbar, dtype=float).reshape(-1)
    if W.shape != (dbar.size, dbar.size):
        raise DimensionMismatch("W must be N x N with N = len(dbar)")
    z = logit(dbar)
    x_eq = softplus(z)
    d = z - W @ x_eq
    return x_eq, d


def make_task(W, dbar):
    """Build a validated TaskBias for ``dbar`` under connectivity ``W``."""
    x_eq, d = realize_bias(W, dbar)
    return TaskBias(dbar=np.asarray(dbar, dtype=float).reshape(-1), d=d, x_eq=x_eq)


def task_residuals(W, task):
    """Max-norm residuals of the fixed-point and sigmoid conditions."""
    z = np.atleast_2d(W) @ task.x_eq + task.d
    r_fix = np.max(np.abs(task.x_eq - softplus(z)))
    r_sig = np.max(np.abs(sigmoid(z) - task.dbar))
    return float(r_fix), float(r_sig)


def linearize(ctrl, task):
    """LTI dynamics at the task equilibrium: (-I + diag(dbar) W, B, C)."""
    N = ctrl.N
    A = -np.eye(N) + task.dbar[:, None] * ctrl.W
    return StateSpace(A, ctrl.B, ctrl.C)


def equilibrium(ctrl, d, x_init=None, max_iters=200, tol=FIXED_POINT_TOL):
    """Find x with x = softplus(W x + d) by damped Newton from ``x_init``.

    Arbitrary biases may admit zero or several equilibria; this returns the
    first root reached from ``x_init`` (default: the origin) and raises
    NoConvergence, carrying the last residual, when the iteration fails.
    """
    W = np.atleast_2d(np.asarray(ctrl.W if isinstance(ctrl, NeuralController) else ctrl, dtype=float))
    d = np.asarray(d, dtype=float).reshape(-1)
    N = d.size
    x = np.zeros(N) if x_init is None else np.asarray(x_init, dtype=float).reshape(-1).copy()
    res = np.inf
    for _ in range(max_iters):
        z = W @ x + d
        F = x - softplus(z)
        res = float(np.max(np.abs(F)))
        if res <= tol:
            return x
        J = np.eye(N) - sigmoid(z)[:, None] * W
        try:
            step = np.linalg.solve(J, -F)
        except np.linalg.LinAlgError as exc:
            raise NoConvergence(
                f"singular Newton Jacobian at residual {res:.3e}", residual=res
            ) from exc
        t = 1.0
        improved = False
        for _ in range(60):
            x_new = x + t * step
            if np.all(np.isfinite(x_new)) and np.linalg.norm(x_new) < DIVERGENCE_NORM:
                r_new = float(np.max(np.abs(x_new - softplus(W @ x_new + d))))
                if r_new < res:
                    x = x_new
                    improved = True
                    break
            t *= 0.5
        if not improved:
            raise NoConvergence(
                f"damped Newton stalled at residual {res:.3e}", residual=res
            )
    raise NoConvergence(
        f"no equilibrium found in {max_iters} iterations, residual {res:.3e}",
        residual=res,
    )


def simulate(ctrl, task, u=None, x0=None, t_final=10.0, dt=1e-3):
    """Integrate the nonlinear controller with classical fixed-step RK4.

    ``u`` is zero, or samples on the RK4 grid (held constant over each
    step). Returns ``(t, states, outputs)`` with states of shape
    ``(steps + 1, N)``. Raises NonFinite when the state norm passes 1e12.
    """
    if dt <= 0 or t_final <= 0:
        raise ValueError("dt and t_final must be positive")
    W, B, C = ctrl.W, ctrl.B, ctrl.C
    d = task.d
    steps = int(round(t_final / dt))
    t = dt * np.arange(steps + 1)
    if x0 is None:
        x0 = task.x_eq
    x = np.asarray(x0, dtype=float).reshape(-1).copy()
    if x.size != ctrl.N:
        raise DimensionMismatch("x0 must have length N")
    if u is None:
        U = np.zeros((steps, ctrl.m))
    else:
        U = np.asarray(u, dtype=float)
        if U.ndim == 0:
            U = np.full((steps, ctrl.m), float(U))
        if U.ndim == 1:
            if ctrl.m != 1:
                raise DimensionMismatch("1-d input signal requires m = 1")
            U = U.reshape(-1, 1)
        if U.shape[0] not in (steps, steps + 1) or U.shape[1] != ctrl.m:
            raise DimensionMismatch(
                f"u must have {steps} or {steps + 1} samples of dimension {ctrl.m}"
            )

    def f(xv, uv):
        return -xv + softplus(W @ xv + d) + B @ uv

    X = np.empty((steps + 1, ctrl.N))
    X[0] = x
    for k in range(steps):
        uk = U[k]
        k1 = f(x, uk)
        k2 = f(x + 0.5 * dt * k1, uk)
        k3 = f(x + 0.5 * dt * k2, uk)
        k4 = f(x + dt * k3, uk)
        x = x + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        if not np.all(np.isfinite(x)) or np.linalg.norm(x) > DIVERGENCE_NORM:
            raise NonFinite(f"state diverged at t = {t[k + 1]:.6g}")
        X[k + 1] = x
    Y = X @ C.T
    return t, X, Y
