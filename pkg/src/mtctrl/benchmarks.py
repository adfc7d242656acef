"""Benchmark surface: the four-plant catalog, LQG tasks, sweep experiments.

The experiments mirror the three studies behind the library's headline
plots: cost versus controller dimension, cost versus number of tasks
(nested subsets), and the trained cost against the analytic upper bound.
Trials are independent, seeded per trial index, and may run in parallel
without changing any result.
"""

import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .errors import GenerationFailure
from .lti import StateSpace, lqr, solve_lyapunov, spectral_abscissa
from .trainer import MultiTaskProblem, TrainConfig, train
from .bounds import upper_bound

# Physical parameters (g and the catalog constants; J_t is the composite
# pendulum inertia J_p + m l^2).
GRAVITY = 9.8
AIRCRAFT_J = 0.0475
AIRCRAFT_R = 25.0
PENDULUM_JP = 0.006
PENDULUM_M = 0.2
PENDULUM_L = 0.3
PENDULUM_GAMMA = 0.01
PENDULUM_JT = PENDULUM_JP + PENDULUM_M * PENDULUM_L**2
BICYCLE_D = 4.8
BICYCLE_V0 = 2.5
BICYCLE_MASS = 8.0
BICYCLE_H = 1.0
BICYCLE_B = 1.2
BICYCLE_J = 8.0


@dataclass(frozen=True)
class PlantCatalog:
    aircraft: StateSpace
    pendulum: StateSpace
    pendulum_friction: StateSpace
    bicycle: StateSpace

    def as_list(self):
        return [self.aircraft, self.pendulum, self.pendulum_friction, self.bicycle]

    names = ("aircraft", "pendulum", "pendulum_friction", "bicycle")


def plant_catalog():
    """The four demo plants, built from the catalog constants.

    The aircraft entry is the roll/pitch double integrator measured at the
    angle (torque input through r/J); the pendula and the bicycle carry
    their published matrices verbatim, including the positive friction
    coefficient of the damped pendulum variant.
    """
    aircraft = StateSpace(
        [[0.0, 1.0], [0.0, 0.0]],
        [0.0, AIRCRAFT_R / AIRCRAFT_J],
        [1.0, 0.0],
    )
    k_pend = PENDULUM_M * GRAVITY * PENDULUM_L / PENDULUM_JT
    pendulum = StateSpace(
        [[0.0, 1.0], [k_pend, 0.0]],
        [0.0, 1.0 / PENDULUM_JT],
        [1.0, 0.0],
    )
    pendulum_friction = StateSpace(
        [[0.0, 1.0], [k_pend, PENDULUM_GAMMA / PENDULUM_JT]],
        [0.0, 1.0 / PENDULUM_JT],
        [1.0, 0.0],
    )
    bicycle = StateSpace(
        [[0.0, 1.0], [BICYCLE_MASS * GRAVITY * BICYCLE_H / BICYCLE_J, 0.0]],
        [
            BICYCLE_D * BICYCLE_V0 / (BICYCLE_B * BICYCLE_J),
            BICYCLE_MASS * BICYCLE_V0**2 * BICYCLE_H / (BICYCLE_B * BICYCLE_J),
        ],
        [1.0, 0.0],
    )
    return PlantCatalog(
        aircraft=aircraft,
        pendulum=pendulum,
        pendulum_friction=pendulum_friction,
        bicycle=bicycle,
    )


def lqg_controller(plant):
    """Observer-based output-feedback controller with identity weights.

    State gain from the regulator Riccati equation, observer gain from the
    dual design. The returned system maps the plant output y to the control
    u and is meant for the negative-feedback interconnection.
    """
    n = plant.n
    K, _ = lqr(plant.A, plant.B, np.eye(n), np.eye(plant.m))
    Lt, _ = lqr(plant.A.T, plant.C.T, np.eye(n), np.eye(plant.p))
    L = Lt.T
    return StateSpace(plant.A - plant.B @ K - L @ plant.C, L, K)


def lqg_task_problem(N=3):
    """The four LQG controllers of the catalog as a training problem."""
    plants = plant_catalog().as_list()
    return MultiTaskProblem(
        systems=tuple(lqg_controller(p) for p in plants), N=N
    )


def random_siso(n, seed):
    """Random stable SISO system with poles in [-2, -0.2].

    For each pole pair a complex pair is drawn with probability one half
    (imaginary part uniform in [0, 2]); b and c entries are unit normal.
    Draws are rejected until both Gramians have minimum eigenvalue above
    1e-8, with a budget of 100 attempts.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    rng = np.random.default_rng(seed)
    for _ in range(100):
        A = _random_stable_A(rng, n)
        b = rng.standard_normal((n, 1))
        c = rng.standard_normal((1, n))
        sys = StateSpace(A, b, c)
        P = solve_lyapunov(A, b @ b.T)
        Q = solve_lyapunov(A.T, c.T @ c)
        if min(np.linalg.eigvalsh(P)[0], np.linalg.eigvalsh(Q)[0]) > 1e-8:
            return sys
    raise GenerationFailure(f"no controllable/observable draw in 100 tries (n={n})")


def _random_stable_A(rng, n):
    A = np.zeros((n, n))
    k = 0
    while k < n:
        if k + 1 < n and rng.random() < 0.5:
            re = rng.uniform(-2.0, -0.2)
            im = rng.uniform(0.0, 2.0)
            A[k : k + 2, k : k + 2] = [[re, im], [-im, re]]
            k += 2
        else:
            A[k, k] = rng.uniform(-2.0, -0.2)
            k += 1
    return A


@dataclass(frozen=True)
class ExperimentRecord:
    """Per-trial final costs over a sweep, with quartile summaries.

    ``costs[t, k]`` is trial t at sweep value ``values[k]``; ``bounds`` is
    present only for the bound-gap experiment.
    """

    sweep: str
    values: tuple
    seeds: tuple
    costs: np.ndarray = field(repr=False)
    bounds: np.ndarray | None = field(default=None, repr=False)

    def quartiles(self):
        """Rows of (value, min, q1, median, q3, max) over trials."""
        out = []
        for k, v in enumerate(self.values):
            col = self.costs[:, k]
            out.append((v, *np.percentile(col, [0, 25, 50, 75, 100])))
        return out

    def medians(self):
        return np.median(self.costs, axis=0)


def _trial_seed(seed, trial):
    return int(seed) * 100_003 + 7919 * int(trial)


def _worker_count(workers):
    if workers is not None:
        return max(1, int(workers))
    env = os.environ.get("MTCTRL_WORKERS")
    if env:
        return max(1, int(env))
    return os.cpu_count() or 1


def _run_parallel(fn, args_list, workers):
    workers = min(_worker_count(workers), len(args_list))
    if workers <= 1:
        return [fn(a) for a in args_list]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, args_list))


# Sweep trainings use the quasi-Newton descent: the plain-gradient default
# cannot dig deep enough into the flat valleys of the larger instances to
# expose the cost-vs-dimension trend.
SWEEP_METHOD = "lbfgs"


def _train_cost(systems, N, iters, seed):
    problem = MultiTaskProblem(systems=tuple(systems), N=N)
    config = TrainConfig(max_iters=iters, seed=seed, method=SWEEP_METHOD)
    return problem, train(problem, config)


def _dim_trial(args):
    seed, n_sys, M, N_values, iters = args
    systems = [random_siso(n_sys, seed=seed * 1000 + j) for j in range(M)]
    costs = []
    for N in N_values:
        _, result = _train_cost(systems, N, iters, seed)
        costs.append(result.final_cost)
    return costs


def experiment_cost_vs_dim(
    M=5, N_values=range(1, 9), trials=20, iters=3000, seed=0, n_sys=2, workers=None
):
    """Final cost as the controller dimension grows, fresh task set per trial."""
    N_values = tuple(int(N) for N in N_values)
    seeds = tuple(_trial_seed(seed, t) for t in range(trials))
    rows = _run_parallel(
        _dim_trial, [(s, n_sys, M, N_values, iters) for s in seeds], workers
    )
    return ExperimentRecord(
        sweep="N", values=N_values, seeds=seeds, costs=np.asarray(rows)
    )


def _count_trial(args):
    seed, n_sys, M_values, N, iters, with_bounds = args
    systems = [random_siso(n_sys, seed=seed * 1000 + j) for j in range(max(M_values))]
    costs = []
    bounds = []
    for M in M_values:
        problem, result = _train_cost(systems[:M], N, iters, seed)
        costs.append(result.final_cost)
        if with_bounds:
            bounds.append(upper_bound(problem).value)
    return costs, bounds


def experiment_cost_vs_count(
    N=4, M_values=range(3, 11), trials=20, iters=3000, seed=0, n_sys=2, workers=None
):
    """Final cost as the task count grows over nested subsets of one draw."""
    rec = _cost_vs_count(N, M_values, trials, iters, seed, n_sys, workers, False)
    return rec


def experiment_bound_gap(
    N=4, M_values=range(3, 11), trials=20, iters=3000, seed=0, n_sys=2, workers=None
):
    """Trained cost and the analytic upper bound on the same task sets."""
    return _cost_vs_count(N, M_values, trials, iters, seed, n_sys, workers, True)


def _cost_vs_count(N, M_values, trials, iters, seed, n_sys, workers, with_bounds):
    M_values = tuple(int(M) for M in M_values)
    seeds = tuple(_trial_seed(seed, t) for t in range(trials))
    rows = _run_parallel(
        _count_trial,
        [(s, n_sys, M_values, N, iters, with_bounds) for s in seeds],
        workers,
    )
    costs = np.asarray([r[0] for r in rows])
    bounds = np.asarray([r[1] for r in rows]) if with_bounds else None
    return ExperimentRecord(
        sweep="M", values=M_values, seeds=seeds, costs=costs, bounds=bounds
    )


def closed_loop_impulse(plant, controller, t_grid):
    """Impulse response of the negative-feedback loop, shape (len(t), p, m)."""
    from .lti import impulse_response, negative_feedback

    return impulse_response(negative_feedback(plant, controller), t_grid)


def impulse_comparison(plants, problem, result, t_max=10.0, dt=1e-3):
    """Closed-loop impulse responses: desired controller vs trained tasks.

    For each task the plant is closed first with the desired controller and
    then with the linearization of the trained controller. Returns a list
    of (t, y_desired, y_neural) with outputs flattened to (len(t), p*m).
    """
    from .neural import linearize

    t = dt * np.arange(int(round(t_max / dt)) + 1)
    series = []
    for plant, desired, task in zip(plants, problem.systems, result.controller.tasks):
        approx = linearize(result.controller, task)
        gd = closed_loop_impulse(plant, desired, t)
        gl = closed_loop_impulse(plant, approx, t)
        k = len(t)
        series.append((t, gd.reshape(k, -1), gl.reshape(k, -1)))
    return series


def closed_loop_abscissas(plants, controllers):
    """Spectral abscissa of each negative-feedback loop."""
    from .lti import negative_feedback

    return [
        spectral_abscissa(negative_feedback(p, c).A)
        for p, c in zip(plants, controllers)
    ]


__all__ = [
    "PlantCatalog",
    "plant_catalog",
    "lqg_controller",
    "lqg_task_problem",
    "random_siso",
    "ExperimentRecord",
    "experiment_cost_vs_dim",
    "experiment_cost_vs_count",
    "experiment_bound_gap",
    "closed_loop_impulse",
    "impulse_comparison",
    "closed_loop_abscissas",
]
