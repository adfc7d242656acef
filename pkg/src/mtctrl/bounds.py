"""Certification bounds for the multi-task approximation cost.

Three independent certificates:

* an upper bound built from the balanced minimal realization of the
  parallel interconnection of all desired systems (truncation term plus an
  output-averaging mismatch term);
* a closed-form lower bound on the sup-over-time impulse-response cost,
  obtained by evaluating the responses at t = 0;
* an exact-at-M=2 lower bound on the L1 impulse-response cost for scalar
  systems, expressed through the -1 branch of the Lambert W function.
"""

import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError, NotScalar, SignError
from .lti import StateSpace, balanced_minimal_realization, hinf_norm, impulse_response
from .trainer import MultiTaskProblem, vars_with_gains

HINF_TOL = 1e-6
W_BRANCH_POINT = -math.exp(-1.0)


@dataclass(frozen=True)
class UpperBoundResult:
    """Upper bound value with the audit quantities behind it."""

    value: float
    case: str  # "RgtN" or "RleN"
    R: int
    sigma: np.ndarray = field(repr=False)
    jB: float
    deltaC_fro: float


@dataclass(frozen=True)
class BoundsReport:
    upper: float
    upper_case: str
    R: int
    sigma: np.ndarray = field(repr=False)
    jB: float
    deltaC_fro: float
    lower_sup: float
    lower_l1: float | None = None
    l1_pair: tuple | None = None


def parallel_system(problem):
    """Parallel interconnection: block-diagonal A and C, stacked B.

    The common input feeds every system; outputs are concatenated, so the
    output dimension is M * p.
    """
    systems = problem.systems
    n_total = sum(s.n for s in systems)
    m, p = problem.m, problem.p
    A = np.zeros((n_total, n_total))
    B = np.zeros((n_total, m))
    C = np.zeros((len(systems) * p, n_total))
    row = 0
    for i, s in enumerate(systems):
        A[row : row + s.n, row : row + s.n] = s.A
        B[row : row + s.n] = s.B
        C[i * p : (i + 1) * p, row : row + s.n] = s.C
        row += s.n
    return StateSpace(A, B, C)


def _block_row_average(Cmat, M, p):
    blocks = Cmat.reshape(M, p, -1)
    avg = blocks.mean(axis=0)
    delta = blocks - avg
    return avg, delta.reshape(M * p, -1)


def upper_bound(problem, N=None, rank_tol=1e-10):
    """Balanced-truncation upper bound on the optimal multi-task cost.

    Builds the parallel system, balances it (order R), and compares R with
    the controller dimension N. For R > N the bound combines the truncation
    cost of the discarded Hankel values with the output-averaging mismatch;
    for R <= N only the mismatch term survives.
    """
    N = problem.N if N is None else int(N)
    M, p = problem.M, problem.p
    bal = balanced_minimal_realization(parallel_system(problem), rank_tol=rank_tol)
    sigma = bal.hankel
    R = bal.order
    if R == 0:
        return UpperBoundResult(
            value=0.0, case="RleN", R=0, sigma=sigma, jB=0.0, deltaC_fro=0.0
        )
    if R > N:
        Ab, Bb, Cb = bal.sys.A, bal.sys.B, bal.sys.C
        S2 = np.diag(sigma[N:])
        B2 = Bb[N:]
        aux = StateSpace(
            Ab,
            np.vstack([np.zeros((N, N)), S2 @ Ab[N:, :N]]),
            np.hstack([np.zeros((N, N)), Ab[:N, N:] @ S2]),
        )
        jB = math.sqrt(float(np.trace(B2.T @ S2 @ B2)) + 2.0 * N * hinf_norm(aux, HINF_TOL))
        _, deltaC = _block_row_average(Cb[:, :N], M, p)
        dC = float(np.linalg.norm(deltaC))
        value = (jB + math.sqrt(sigma[0]) * dC) ** 2
        return UpperBoundResult(
            value=value, case="RgtN", R=R, sigma=sigma, jB=jB, deltaC_fro=dC
        )
    _, deltaC = _block_row_average(bal.sys.C, M, p)
    dC = float(np.linalg.norm(deltaC))
    return UpperBoundResult(
        value=sigma[0] * dC * dC, case="RleN", R=R, sigma=sigma, jB=0.0, deltaC_fro=dC
    )


def constructive_vars(problem, N=None, rank_tol=1e-10):
    """Decision variables realizing the construction behind the upper bound.

    All tasks share one gain diagonal of one half; W is chosen so the shared
    linearization equals the leading balanced block (padded with -I states
    when the balanced order is below N). The cost of these variables never
    exceeds :func:`upper_bound`.
    """
    N = problem.N if N is None else int(N)
    M, p, m = problem.M, problem.p, problem.m
    bal = balanced_minimal_realization(parallel_system(problem), rank_tol=rank_tol)
    R = bal.order
    Ab, Bb, Cb = bal.sys.A, bal.sys.B, bal.sys.C
    if R > N:
        A_target = Ab[:N, :N]
        B = Bb[:N]
        avg, _ = _block_row_average(Cb[:, :N], M, p)
        C = avg
    else:
        A_target = np.zeros((N, N))
        A_target[:R, :R] = Ab
        A_target[R:, R:] = -np.eye(N - R)
        B = np.vstack([Bb, np.zeros((N - R, m))])
        avg, _ = _block_row_average(Cb, M, p)
        C = np.hstack([avg, np.zeros((p, N - R))])
    W = 2.0 * (A_target + np.eye(N))
    D = np.full((M, N), 0.5)
    return vars_with_gains(W, D, B, C)


def lower_bound_sup(problem):
    """Closed-form lower bound on the sup-over-time impulse error cost.

    Evaluates the impulse responses at t = 0, where the error depends only
    on the products C_i B_i; the mean over tasks minimizes the resulting
    Frobenius sum.
    """
    prods = [s.C @ s.B for s in problem.systems]
    mean = sum(prods) / len(prods)
    total = sum(float(np.linalg.norm(Pi - mean) ** 2) for Pi in prods)
    return math.sqrt(total / min(problem.p, problem.m))


def sup_norm_cost(problem, vars, t_grid=None):
    """Sum over tasks of sup_t ||g_i_desired(t) - g_i_candidate(t)||_2.

    Grid-evaluated (the grid always includes t = 0), so the value is a
    certified underestimate of the true sup cost of the candidate and still
    dominates :func:`lower_bound_sup`.
    """
    from .trainer import linearizations

    if t_grid is None:
        t_grid = np.linspace(0.0, 20.0, 401)
    approx = linearizations(vars)
    total = 0.0
    for sys_d, sys_l in zip(problem.systems, approx):
        gd = impulse_response(sys_d, t_grid)
        gl = impulse_response(sys_l, t_grid)
        total += max(
            float(np.linalg.norm(gd[k] - gl[k], 2)) for k in range(len(t_grid))
        )
    return total


def lambert_w_neg1(x):
    """Lambert W on the -1 branch: w <= -1 with w e^w = x, x in (-1/e, 0).

    Bisection on (-745, -1] followed by Halley polishing; the residual
    |w e^w - x| is driven below 1e-12.
    """
    x = float(x)
    if not W_BRANCH_POINT < x < 0.0:
        raise DomainError(f"lambert_w_neg1 requires -1/e < x < 0, got {x!r}")
    lo, hi = -745.0, -1.0  # g(w) = w e^w - x has g(lo) > 0 > g(hi)
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if mid * math.exp(mid) - x > 0.0:
            lo = mid
        else:
            hi = mid
        if hi - lo < 1e-13 * max(1.0, abs(hi)):
            break
    w = 0.5 * (lo + hi)
    for _ in range(8):
        ew = math.exp(w)
        f = w * ew - x
        if abs(f) <= 1e-15 * max(1.0, abs(x)):
            break
        wp1 = w + 1.0
        denom = ew * wp1 - (w + 2.0) * f / (2.0 * wp1)
        w -= f / denom
    return w


_W_HALF_E = None


def _w_half_e():
    global _W_HALF_E
    if _W_HALF_E is None:
        _W_HALF_E = lambert_w_neg1(-0.5 * math.exp(-1.0))
    return _W_HALF_E


def _scalar_params(systems):
    params = []
    for i, s in enumerate(systems):
        if s.n != 1 or not s.is_siso:
            raise NotScalar(f"system {i} is not scalar (n={s.n}, m={s.m}, p={s.p})")
        a = float(s.A[0, 0])
        r = float(s.B[0, 0] * s.C[0, 0])
        if a >= 0.0:
            raise SignError(f"system {i} has a = {a:.6g} >= 0")
        if r <= 0.0:
            raise SignError(f"system {i} has b*c = {r:.6g} <= 0")
        params.append((a, r))
    return params


def a_function(systems, j, l):
    """Boundary-case L1 error of approximating system j exactly at r = r_l.

    Zero-based indices into ``systems``; scalar systems with a < 0 and
    b*c > 0 are required.
    """
    params = _scalar_params(systems)
    if j == l:
        raise DomainError("indices j and l must differ")
    aj, rj = params[j]
    _, rl = params[l]
    W = _w_half_e()
    return rj / aj - (rl / aj) * (math.log(rl / rj) / W + 1.0)


def _pair_bound(aj, rj, al, rl):
    # requires rj <= rl
    W = _w_half_e()
    A_jl = rj / aj - (rl / aj) * (math.log(rl / rj) / W + 1.0)
    A_lj = rl / al - (rj / al) * (math.log(rj / rl) / W + 1.0)
    return min(A_jl, -A_lj, -rj / aj)


def lower_bound_l1(systems, sharpen=False):
    """Lower bound on the total L1 impulse-response error for scalar banks.

    Systems are ordered by increasing r = b*c internally. By default the
    two smallest-r systems form the certifying pair; with ``sharpen`` the
    best pair is searched. Returns ``(value, (j, l))`` with indices into
    the original list (the bound is tight at M = 2).
    """
    systems = list(systems)
    if len(systems) < 2:
        raise ValueError("at least two systems are required")
    params = _scalar_params(systems)
    order = sorted(range(len(systems)), key=lambda i: params[i][1])
    if sharpen:
        best = -math.inf
        best_pair = None
        for pos_j, pos_l in itertools.combinations(range(len(order)), 2):
            j, l = order[pos_j], order[pos_l]
            val = _pair_bound(*params[j], *params[l])
            if val > best:
                best, best_pair = val, (j, l)
        return best, best_pair
    j, l = order[0], order[1]
    return _pair_bound(*params[j], *params[l]), (j, l)


def l1_cost(problem, vars, t_max=None, dt=None):
    """Sum over tasks of the L1 norms of the scalar error systems."""
    from .lti import l1_norm
    from .trainer import error_system, linearizations

    total = 0.0
    for sys_d, sys_l in zip(problem.systems, linearizations(vars)):
        total += l1_norm(error_system(sys_d, sys_l), t_max=t_max, dt=dt)
    return total


def _l1_error_curve(a, r_true, x_grid, r, t):
    """L1 errors |r_true e^{a t} - r e^{x t}| integrated on t, per x in x_grid.

    Same trapezoidal quadrature as :func:`mtctrl.lti.l1_norm` applied to the
    two-state error system, vectorized over the candidate pole grid.
    """
    g = r_true * np.exp(a * t)[None, :] - r * np.exp(np.outer(x_grid, t))
    return np.trapezoid(np.abs(g), t, axis=1)


def _golden_min(f, lo, hi, iters=60):
    inv_phi = (math.sqrt(5.0) - 1.0) / 2.0
    c = hi - inv_phi * (hi - lo)
    d = lo + inv_phi * (hi - lo)
    fc, fd = f(c), f(d)
    for _ in range(iters):
        if fc < fd:
            hi, d, fd = d, c, fc
            c = hi - inv_phi * (hi - lo)
            fc = f(c)
        else:
            lo, c, fc = c, d, fd
            d = lo + inv_phi * (hi - lo)
            fd = f(d)
    return (0.5 * (lo + hi), min(fc, fd))


def minimize_l1_pair(
    sys_j,
    sys_l,
    r_points=200,
    x_points=400,
    t_samples=10_000,
    refine=True,
):
    """Numerically minimize the two-task L1 cost over scalar controllers.

    Grid search over the candidate product r = B*C (log-spaced across
    [r_j/2, 2*r_l]) and the candidate poles (log-spaced in [-50, -1e-3]),
    followed by golden-section refinement. This is the independent
    cross-check for the scalar lower bound, which it meets within one
    percent at M = 2.
    """
    (aj, rj), (al, rl) = _scalar_params([sys_j, sys_l])
    if rj > rl:
        (aj, rj), (al, rl) = (al, rl), (aj, rj)
    t_max = 40.0 / abs(max(aj, al))
    t = np.linspace(0.0, t_max, t_samples + 1)
    x_grid = -np.logspace(math.log10(1e-3), math.log10(50.0), x_points)[::-1]
    r_grid = np.logspace(math.log10(rj / 2.0), math.log10(2.0 * rl), r_points)

    exp_x = np.exp(np.outer(x_grid, t))
    gj = np.exp(aj * t) * rj
    gl = np.exp(al * t) * rl

    best = (math.inf, None, None, None)
    for r in r_grid:
        ej = np.trapezoid(np.abs(gj[None, :] - r * exp_x), t, axis=1)
        el = np.trapezoid(np.abs(gl[None, :] - r * exp_x), t, axis=1)
        kj, kl = int(np.argmin(ej)), int(np.argmin(el))
        total = float(ej[kj] + el[kl])
        if total < best[0]:
            best = (total, r, x_grid[kj], x_grid[kl])
    if not refine:
        return best

    def pole_min(r, a_sys, r_sys, x_seed):
        f = lambda x: float(_l1_error_curve(a_sys, r_sys, np.array([x]), r, t)[0])
        lo, hi = x_seed * 4.0, min(x_seed / 4.0, -1e-4)
        return _golden_min(f, lo, hi)

    def total_at(r):
        xj, fj = pole_min(r, aj, rj, best[2])
        xl, fl = pole_min(r, al, rl, best[3])
        return fj + fl, xj, xl

    r_lo, r_hi = best[1] / 1.5, best[1] * 1.5
    r_opt, _ = _golden_min(lambda r: total_at(r)[0], r_lo, r_hi, iters=40)
    value, xj, xl = total_at(r_opt)
    return (value, r_opt, xj, xl)


def bounds_report(problem, N=None, sharpen=False):
    """All certificates for a problem in one record.

    The scalar L1 bound is present only when every system is scalar.
    """
    ub = upper_bound(problem, N=N)
    lsup = lower_bound_sup(problem)
    lower_l1 = None
    pair = None
    try:
        lower_l1, pair = lower_bound_l1(problem.systems, sharpen=sharpen)
    except (NotScalar, SignError, ValueError):
        pass
    return BoundsReport(
        upper=ub.value,
        upper_case=ub.case,
        R=ub.R,
        sigma=ub.sigma,
        jB=ub.jB,
        deltaC_fro=ub.deltaC_fro,
        lower_sup=lsup,
        lower_l1=lower_l1,
        l1_pair=pair,
    )


__all__ = [
    "BoundsReport",
    "UpperBoundResult",
    "parallel_system",
    "upper_bound",
    "constructive_vars",
    "lower_bound_sup",
    "sup_norm_cost",
    "lambert_w_neg1",
    "a_function",
    "lower_bound_l1",
    "l1_cost",
    "minimize_l1_pair",
    "bounds_report",
]
