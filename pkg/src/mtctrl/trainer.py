"""Multi-task H2 training: error systems, analytic gradients, gradient descent.

The decision variables are the shared connectivity W, input/output maps B
and C, and one gain vector per task parametrized through logits so the
sigmoid diagonal stays strictly inside (0,1), which keeps every gain matrix
realizable by a bias vector.
"""

import enum
import math
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from ._backend import kernels
from .errors import DimensionMismatch, NotHurwitz
from .lti import StateSpace, spectral_abscissa
from .neural import NeuralController, make_task, sigmoid

COST_INF = math.inf


@dataclass(frozen=True)
class MultiTaskProblem:
    """An ordered bank of desired Hurwitz systems plus the controller order N."""

    systems: tuple
    N: int

    def __post_init__(self):
        systems = tuple(self.systems)
        if not systems:
            raise ValueError("at least one desired system is required")
        m, p = systems[0].m, systems[0].p
        for i, sys in enumerate(systems):
            if (sys.m, sys.p) != (m, p):
                raise DimensionMismatch(
                    f"system {i} has (m, p) = ({sys.m}, {sys.p}), expected ({m}, {p})"
                )
            sa = spectral_abscissa(sys.A)
            if sa >= 0.0:
                raise NotHurwitz(f"system {i} has spectral abscissa {sa:.6g} >= 0")
        if int(self.N) < 1:
            raise ValueError("controller dimension N must be >= 1")
        object.__setattr__(self, "systems", systems)
        object.__setattr__(self, "N", int(self.N))

    @property
    def M(self):
        return len(self.systems)

    @property
    def m(self):
        return self.systems[0].m

    @property
    def p(self):
        return self.systems[0].p


@dataclass(frozen=True)
class DecisionVars:
    """Optimization state: W, per-task gain logits theta, B, C."""

    W: np.ndarray
    theta: np.ndarray  # (M, N) logits; sigmoid rows are the gain diagonals
    B: np.ndarray
    C: np.ndarray

    def __post_init__(self):
        W = np.atleast_2d(np.asarray(self.W, dtype=float))
        theta = np.atleast_2d(np.asarray(self.theta, dtype=float))
        B = np.atleast_2d(np.asarray(self.B, dtype=float))
        C = np.atleast_2d(np.asarray(self.C, dtype=float))
        N = W.shape[0]
        if W.shape != (N, N) or theta.shape[1] != N or B.shape[0] != N or C.shape[1] != N:
            raise DimensionMismatch("inconsistent decision-variable shapes")
        for mat in (W, theta, B, C):
            if not np.all(np.isfinite(mat)):
                raise ValueError("decision variables must be finite")
        object.__setattr__(self, "W", W)
        object.__setattr__(self, "theta", theta)
        object.__setattr__(self, "B", B)
        object.__setattr__(self, "C", C)

    @property
    def N(self):
        return self.W.shape[0]

    @property
    def M(self):
        return self.theta.shape[0]

    def gains(self):
        """Per-task sigmoid diagonals D_i, shape (M, N), strictly in (0,1)."""
        return sigmoid(self.theta)


class GradientBlocks(NamedTuple):
    """Gradient of the total cost, blocked like the decision variables.

    ``D`` holds per-task diagonal gradients, shape (M, N); in the logit
    parametrization the same slot carries the theta gradient.
    """

    W: np.ndarray
    B: np.ndarray
    C: np.ndarray
    D: np.ndarray

    def norm(self):
        return math.sqrt(
            sum(float(np.sum(b * b)) for b in (self.W, self.B, self.C, self.D))
        )


class TrainStatus(str, enum.Enum):
    CONVERGED = "converged"
    MAX_ITERS = "max_iters"
    STALLED = "stalled"


@dataclass(frozen=True)
class TrainConfig:
    """Training hyperparameters.

    ``method`` selects plain gradient descent ("gd", the default) or a
    limited-memory quasi-Newton descent ("lbfgs") that uses the same Armijo
    backtracking and stability sentinel; the latter digs much deeper into
    the flat valleys of large instances and is what the benchmark sweeps
    use.
    """

    max_iters: int = 5000
    grad_tol: float = 1e-6
    armijo_c: float = 1e-4
    armijo_shrink: float = 0.5
    armijo_init_step: float = 1e-2
    armijo_max_backtracks: int = 40
    stall_limit: int = 40
    seed: int = 0
    init_spectral_norm: float = 0.9
    method: str = "gd"
    lbfgs_memory: int = 20

    def __post_init__(self):
        if self.max_iters <= 0 or self.grad_tol <= 0:
            raise ValueError("max_iters and grad_tol must be positive")
        if not 0.0 < self.armijo_shrink < 1.0:
            raise ValueError("armijo_shrink must lie in (0, 1)")
        if min(self.armijo_c, self.armijo_init_step, self.init_spectral_norm) <= 0:
            raise ValueError("armijo_c, armijo_init_step, init_spectral_norm must be positive")
        if self.armijo_max_backtracks <= 0 or self.stall_limit <= 0:
            raise ValueError("backtrack and stall limits must be positive")
        if self.method not in ("gd", "lbfgs"):
            raise ValueError("method must be 'gd' or 'lbfgs'")
        if self.lbfgs_memory < 1:
            raise ValueError("lbfgs_memory must be >= 1")


@dataclass(frozen=True)
class TrainResult:
    vars: DecisionVars
    controller: NeuralController
    cost_history: np.ndarray = field(repr=False)
    grad_norm_history: np.ndarray = field(repr=False)
    status: TrainStatus

    @property
    def final_cost(self):
        return float(self.cost_history[-1])


def error_system(desired, approx):
    """Stack desired and approximating systems into the difference system.

    Block-diagonal A, stacked B, output ``[C_i, -C]``: its H2 norm is the
    H2 distance between the two transfer functions.
    """
    if desired.m != approx.m or desired.p != approx.p:
        raise DimensionMismatch(
            f"(m, p) mismatch: ({desired.m}, {desired.p}) vs ({approx.m}, {approx.p})"
        )
    n, N = desired.n, approx.n
    A = np.zeros((n + N, n + N))
    A[:n, :n] = desired.A
    A[n:, n:] = approx.A
    B = np.vstack([desired.B, approx.B])
    C = np.hstack([desired.C, -approx.C])
    return StateSpace(A, B, C)


def _gain_dynamics(W, Di):
    return -np.eye(W.shape[0]) + Di[:, None] * W


def _cost_raw(problem, W, D, B, C):
    """Total cost for explicit gain diagonals D (M, N); +inf when unstable."""
    total = 0.0
    for i, sys in enumerate(problem.systems):
        AL = _gain_dynamics(W, D[i])
        if spectral_abscissa(AL) >= 0.0:
            return COST_INF
        total += kernels.task_h2_cost(sys.A, sys.B, sys.C, AL, B, C)
    return total


def cost(problem, vars):
    """Sum over tasks of the squared H2 error norms (eq. target of training).

    Returns the +inf sentinel instead of raising when any linearization is
    not Hurwitz, so line searches can reject the step.
    """
    return _cost_raw(problem, vars.W, vars.gains(), vars.B, vars.C)


def task_costs(problem, vars):
    """Per-task cost values (any unstable task yields +inf for that entry)."""
    D = vars.gains()
    out = []
    for i, sys in enumerate(problem.systems):
        AL = _gain_dynamics(vars.W, D[i])
        if spectral_abscissa(AL) >= 0.0:
            out.append(COST_INF)
        else:
            out.append(kernels.task_h2_cost(sys.A, sys.B, sys.C, AL, vars.B, vars.C))
    return out


def gradients(problem, vars):
    """Analytic gradient blocks (W, B, C, per-task D diagonals).

    Per task, the error-system Gramians are computed and partitioned; the
    returned blocks are exactly the Gramian-block expressions of the cost
    gradient. Raises NotHurwitz when a linearization is unstable.
    """
    D = vars.gains()
    W, B, C = vars.W, vars.B, vars.C
    dW = np.zeros_like(W)
    dB = np.zeros_like(B)
    dC = np.zeros_like(C)
    dD = np.zeros((problem.M, problem.N))
    for i, sys in enumerate(problem.systems):
        AL = _gain_dynamics(W, D[i])
        sa = spectral_abscissa(AL)
        if sa >= 0.0:
            raise NotHurwitz(f"task {i} linearization has abscissa {sa:.6g} >= 0")
        _, G, gB, gC = kernels.task_h2_cost_grad(sys.A, sys.B, sys.C, AL, B, C)
        dW += 2.0 * D[i][:, None] * G
        dB += gB
        dC += gC
        dD[i] = 2.0 * np.einsum("hl,hl->h", G, W)
    return GradientBlocks(W=dW, B=dB, C=dC, D=dD)


def gradients_theta(problem, vars):
    """Gradient in the logit parametrization: chain rule through sigmoid."""
    g = gradients(problem, vars)
    D = vars.gains()
    return GradientBlocks(W=g.W, B=g.B, C=g.C, D=g.D * D * (1.0 - D))


def finite_diff_gradient(problem, vars, h=1e-6, wrt="D"):
    """Central-difference gradient of the cost, the oracle for Theorem-2 checks.

    ``wrt="D"`` differentiates with respect to the gain diagonals directly,
    matching :func:`gradients`; ``wrt="theta"`` matches
    :func:`gradients_theta`.
    """
    if h <= 0:
        raise ValueError("h must be positive")
    if wrt not in ("D", "theta"):
        raise ValueError("wrt must be 'D' or 'theta'")
    W0, B0, C0 = vars.W, vars.B, vars.C
    th0 = vars.theta

    def at(W=None, theta=None, B=None, C=None, D=None):
        Dmat = sigmoid(th0 if theta is None else theta) if D is None else D
        return _cost_raw(
            problem,
            W0 if W is None else W,
            Dmat,
            B0 if B is None else B,
            C0 if C is None else C,
        )

    def central(make):
        hi = at(**make(+h))
        lo = at(**make(-h))
        if not (math.isfinite(hi) and math.isfinite(lo)):
            raise NotHurwitz("finite-difference probe left the stable region")
        return (hi - lo) / (2.0 * h)

    def perturb(mat, idx, eps):
        out = mat.copy()
        out[idx] += eps
        return out

    dW = np.zeros_like(W0)
    for idx in np.ndindex(*W0.shape):
        dW[idx] = central(lambda eps, idx=idx: {"W": perturb(W0, idx, eps)})
    dB = np.zeros_like(B0)
    for idx in np.ndindex(*B0.shape):
        dB[idx] = central(lambda eps, idx=idx: {"B": perturb(B0, idx, eps)})
    dC = np.zeros_like(C0)
    for idx in np.ndindex(*C0.shape):
        dC[idx] = central(lambda eps, idx=idx: {"C": perturb(C0, idx, eps)})
    dD = np.zeros((problem.M, problem.N))
    D0 = vars.gains()
    for idx in np.ndindex(*dD.shape):
        if wrt == "D":
            dD[idx] = central(lambda eps, idx=idx: {"D": perturb(D0, idx, eps)})
        else:
            dD[idx] = central(lambda eps, idx=idx: {"theta": perturb(th0, idx, eps)})
    return GradientBlocks(W=dW, B=dB, C=dC, D=dD)


def init_vars(problem, config=None, seed=None):
    """Deterministic random start that is provably stable.

    theta = 0 gives gains of one half; W is rescaled to the configured
    spectral norm (< 2 keeps every -I + D_i W Hurwitz); B and C are unit
    normals scaled by 1/sqrt(N).
    """
    config = config or TrainConfig()
    rng = np.random.default_rng(config.seed if seed is None else seed)
    N, m, p = problem.N, problem.m, problem.p
    W = rng.standard_normal((N, N))
    sigma = np.linalg.norm(W, 2)
    if sigma > 0:
        W *= config.init_spectral_norm / sigma
    theta = np.zeros((problem.M, N))
    B = rng.standard_normal((N, m)) / math.sqrt(N)
    C = rng.standard_normal((p, N)) / math.sqrt(N)
    return DecisionVars(W=W, theta=theta, B=B, C=C)


def _step(vars, g, alpha):
    return DecisionVars(
        W=vars.W - alpha * g.W,
        theta=vars.theta - alpha * g.D,
        B=vars.B - alpha * g.B,
        C=vars.C - alpha * g.C,
    )


def _pack(blocks):
    return np.concatenate(
        [blocks.W.ravel(), blocks.D.ravel(), blocks.B.ravel(), blocks.C.ravel()]
    )


def _pack_vars(vars):
    return np.concatenate(
        [vars.W.ravel(), vars.theta.ravel(), vars.B.ravel(), vars.C.ravel()]
    )


def _unpack_blocks(x, problem):
    N, M, m, p = problem.N, problem.M, problem.m, problem.p
    i = 0
    W = x[i : i + N * N].reshape(N, N)
    i += N * N
    theta = x[i : i + M * N].reshape(M, N)
    i += M * N
    B = x[i : i + N * m].reshape(N, m)
    i += N * m
    C = x[i : i + p * N].reshape(p, N)
    return GradientBlocks(W=W, B=B, C=C, D=theta)


class _LbfgsDirection:
    """Two-loop recursion over a short (s, y) history; yields descent steps."""

    def __init__(self, memory):
        self.memory = memory
        self.S = []
        self.Y = []
        self.prev_x = None
        self.prev_g = None

    def reset(self):
        self.S.clear()
        self.Y.clear()
        self.prev_x = None
        self.prev_g = None

    def update(self, x, g):
        if self.prev_x is not None:
            s = x - self.prev_x
            y = g - self.prev_g
            sy = float(s @ y)
            if sy > 1e-10 * np.linalg.norm(s) * np.linalg.norm(y):
                self.S.append(s)
                self.Y.append(y)
                if len(self.S) > self.memory:
                    self.S.pop(0)
                    self.Y.pop(0)
        self.prev_x = x
        self.prev_g = g

    def direction(self, g):
        if not self.S:
            return g, False
        q = g.copy()
        alphas = []
        for s, y in zip(reversed(self.S), reversed(self.Y)):
            a = float(s @ q) / float(s @ y)
            q -= a * y
            alphas.append(a)
        q *= float(self.S[-1] @ self.Y[-1]) / float(self.Y[-1] @ self.Y[-1])
        for (s, y), a in zip(zip(self.S, self.Y), reversed(alphas)):
            b = float(y @ q) / float(s @ y)
            q += (a - b) * s
        if float(g @ q) <= 0.0:  # safeguard: fall back to steepest descent
            return g, False
        return q, True


def _wolfe_search(problem, vars, J, d, dx, slope, alpha, config):
    """Weak-Wolfe bracketing along the descent direction ``-d``.

    Accepts only points with sufficient (Armijo) decrease, so iterates stay
    monotone; the curvature condition steers the step so the quasi-Newton
    pairs stay well scaled. Returns ``(accepted, vars, J, grad_or_None)``;
    the gradient at the accepted point is reused by the caller.
    """
    c1, c2 = config.armijo_c, 0.9
    lo, hi = 0.0, math.inf
    best = None  # (alpha, vars, J, grad)
    for _ in range(config.armijo_max_backtracks):
        trial = _step(vars, d, alpha)
        J_trial = cost(problem, trial)
        if not J_trial <= J - c1 * alpha * slope:  # Armijo fails (or +inf)
            hi = alpha
            alpha = 0.5 * (lo + hi)
            if alpha <= 0.0:
                break
            continue
        g_trial = gradients_theta(problem, trial)
        best = (alpha, trial, J_trial, g_trial)
        if float(_pack(g_trial) @ dx) > c2 * slope:  # still steep: lengthen
            lo = alpha
            alpha = 2.0 * alpha if math.isinf(hi) else 0.5 * (lo + hi)
            continue
        return True, trial, J_trial, g_trial
    if best is not None:
        _, trial, J_trial, g_trial = best
        return True, trial, J_trial, g_trial
    return False, vars, J, None


def train(problem, config=None):
    """Armijo-backtracked descent on (W, theta, B, C).

    The default method follows the negative gradient; "lbfgs" follows a
    limited-memory quasi-Newton direction instead (same line search). In
    both cases trial steps that destabilize any linearization cost +inf and
    are rejected, so every accepted iterate is stable and the cost history
    is nonincreasing. Stops on gradient norm <= grad_tol (converged), the
    iteration budget (max_iters), or ``stall_limit`` consecutive failed
    line searches (stalled). Biases for the final controller are realized
    in closed form from the trained logits.
    """
    config = config or TrainConfig()
    vars = init_vars(problem, config)
    J = cost(problem, vars)
    if not math.isfinite(J):
        raise NotHurwitz("initialization produced an unstable linearization")
    cost_history = [J]
    grad_norms = []
    status = TrainStatus.MAX_ITERS
    use_lbfgs = config.method == "lbfgs"
    lbfgs = _LbfgsDirection(config.lbfgs_memory) if use_lbfgs else None
    step0 = config.armijo_init_step
    consecutive_failures = 0
    g = None
    for _ in range(config.max_iters):
        if g is None:
            g = gradients_theta(problem, vars)
        gnorm = g.norm()
        grad_norms.append(gnorm)
        if gnorm <= config.grad_tol:
            status = TrainStatus.CONVERGED
            break
        if use_lbfgs:
            gx = _pack(g)
            lbfgs.update(_pack_vars(vars), gx)
            dx, scaled = lbfgs.direction(gx)
            d = _unpack_blocks(dx, problem)
            slope = float(gx @ dx)
            alpha = 1.0 if scaled else step0
            accepted, vars, J, g = _wolfe_search(
                problem, vars, J, d, dx, slope, alpha, config
            )
            if accepted:
                cost_history.append(J)
        else:
            d = g
            slope = gnorm * gnorm
            alpha = step0
            accepted = False
            for _ in range(config.armijo_max_backtracks):
                trial = _step(vars, d, alpha)
                J_trial = cost(problem, trial)
                if J_trial <= J - config.armijo_c * alpha * slope:
                    vars, J = trial, J_trial
                    cost_history.append(J)
                    accepted = True
                    break
                alpha *= config.armijo_shrink
            g = None
        if accepted:
            consecutive_failures = 0
            if not use_lbfgs:
                step0 = min(2.0 * alpha, 1.0)
        else:
            consecutive_failures += 1
            if use_lbfgs:
                lbfgs.reset()  # stale curvature; retry from steepest descent
                g = None
            else:
                step0 = max(alpha, 1e-16)
            if consecutive_failures >= config.stall_limit:
                status = TrainStatus.STALLED
                break
    controller = build_controller(vars)
    return TrainResult(
        vars=vars,
        controller=controller,
        cost_history=np.asarray(cost_history),
        grad_norm_history=np.asarray(grad_norms),
        status=status,
    )


def build_controller(vars):
    """Realize the trained variables as a neural controller with task biases.

    Gains that have saturated to exactly 0 or 1 in float64 (|theta| beyond
    ~37) are nudged inside (0,1) by one part in 1e12 so the closed-form
    bias realization stays defined.
    """
    gains = np.clip(vars.gains(), 1e-12, 1.0 - 1e-12)
    tasks = tuple(make_task(vars.W, dbar) for dbar in gains)
    return NeuralController(W=vars.W, B=vars.B, C=vars.C, tasks=tasks)


def linearizations(vars):
    """The per-task LTI systems (-I + D_i W, B, C) for candidate variables."""
    return [
        StateSpace(_gain_dynamics(vars.W, Di), vars.B, vars.C) for Di in vars.gains()
    ]


def vars_with_gains(W, D, B, C):
    """DecisionVars from explicit gain diagonals (rows strictly in (0,1))."""
    from .neural import logit

    D = np.atleast_2d(np.asarray(D, dtype=float))
    return DecisionVars(W=W, theta=logit(D), B=B, C=C)


__all__ = [
    "MultiTaskProblem",
    "DecisionVars",
    "GradientBlocks",
    "TrainConfig",
    "TrainResult",
    "TrainStatus",
    "error_system",
    "cost",
    "task_costs",
    "gradients",
    "gradients_theta",
    "finite_diff_gradient",
    "init_vars",
    "train",
    "build_controller",
    "linearizations",
    "vars_with_gains",
]
