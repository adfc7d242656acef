"""mtctrl command line: train, gradcheck, bounds, simulate, bench.

Exit codes: 0 success, 1 input/validation error, 2 training stalled,
3 self-test (gradient check) failure.
"""

import argparse
import json
import os
import sys

import numpy as np

from . import __version__
from .errors import MtctrlError
from .fileio import (
    FileFormatError,
    fmt,
    load_problem,
    load_result,
    load_single_system,
    save_problem,
    save_result,
    write_csv,
)
from .trainer import (
    TrainConfig,
    TrainStatus,
    finite_diff_gradient,
    gradients,
    init_vars,
    train,
)

EXIT_OK = 0
EXIT_INPUT = 1
EXIT_STALLED = 2
EXIT_SELFTEST = 3


def _parser():
    p = argparse.ArgumentParser(
        prog="mtctrl",
        description="Train one neural controller against a bank of linear "
        "controllers and certify the result against analytic bounds.",
        epilog="Exit codes: 0 success; 1 input or validation error; "
        "2 training stalled; 3 gradient self-test failure.",
    )
    p.add_argument("--version", action="version", version=f"mtctrl {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    t = sub.add_parser("train", help="train a controller on a problem file")
    t.add_argument("--problem", required=True, help="problem JSON file")
    t.add_argument("--dim", type=int, help="controller dimension N (overrides file)")
    t.add_argument("--seed", type=int, default=0)
    t.add_argument("--max-iters", type=int, default=5000)
    t.add_argument("--tol", type=float, default=1e-6, help="gradient-norm stop")
    t.add_argument("--method", choices=("gd", "lbfgs"), default="gd")
    t.add_argument("--out", required=True, help="result JSON file")

    g = sub.add_parser("gradcheck", help="analytic vs finite-difference gradients")
    g.add_argument("--problem", required=True)
    g.add_argument("--dim", type=int)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--step", type=float, default=1e-6, help="finite-difference step")
    g.add_argument(
        "--perturb",
        action="store_true",
        help="flip the sign of one analytic gradient term (negative control)",
    )

    b = sub.add_parser("bounds", help="upper and lower bounds for a problem")
    b.add_argument("--problem", required=True)
    b.add_argument("--dim", type=int)
    b.add_argument("--sharpen", action="store_true", help="search the best scalar pair")

    s = sub.add_parser("simulate", help="closed-loop impulse comparison CSV")
    s.add_argument("--result", required=True, help="result JSON from train")
    s.add_argument("--task", type=int, required=True, help="task index (0-based)")
    s.add_argument("--plant", help="plant JSON ({A,B,C} or a problem file)")
    s.add_argument("--problem", help="problem file with the desired controllers")
    s.add_argument("--impulse", action="store_true", help="impulse excitation")
    s.add_argument("--open-loop", action="store_true", help="nonlinear open-loop run")
    s.add_argument("--t-max", type=float, default=10.0)
    s.add_argument("--dt", type=float, default=1e-3)
    s.add_argument("--out", required=True, help="output CSV")

    e = sub.add_parser("bench", help="benchmark experiments and the plant catalog")
    e.add_argument(
        "experiment",
        choices=("cost-vs-dim", "cost-vs-count", "bound-gap", "plants"),
    )
    e.add_argument("--trials", type=int, default=20)
    e.add_argument("--iters", type=int, default=3000)
    e.add_argument("--seed", type=int, default=0)
    e.add_argument("--out", required=True, help="output directory")
    e.add_argument(
        "--workers",
        type=int,
        default=None,
        help="parallel trial workers (default: MTCTRL_WORKERS or CPU count)",
    )
    return p


def _fail(msg):
    print(f"error: {msg}", file=sys.stderr)
    return EXIT_INPUT


def cmd_train(args):
    try:
        problem = load_problem(args.problem, dim=args.dim)
    except (OSError, FileFormatError) as exc:
        return _fail(exc)
    config = TrainConfig(
        max_iters=args.max_iters,
        grad_tol=args.tol,
        seed=args.seed,
        method=args.method,
    )
    result = train(problem, config)
    save_result(args.out, result, config, __version__)
    print(f"final cost: {fmt(result.final_cost)}")
    print(f"status: {result.status.value}")
    print(f"result written to {args.out}")
    return EXIT_STALLED if result.status is TrainStatus.STALLED else EXIT_OK


def cmd_gradcheck(args):
    try:
        problem = load_problem(args.problem, dim=args.dim)
    except (OSError, FileFormatError) as exc:
        return _fail(exc)
    vars = init_vars(problem, TrainConfig(seed=args.seed))
    analytic = gradients(problem, vars)
    numeric = finite_diff_gradient(problem, vars, h=args.step)
    if args.perturb:
        analytic = analytic._replace(W=-analytic.W)
    worst = 0.0
    for name in ("W", "B", "C", "D"):
        a = getattr(analytic, name)
        f = getattr(numeric, name)
        denom = max(np.linalg.norm(a), np.linalg.norm(f), 1e-12)
        rel = float(np.linalg.norm(a - f) / denom)
        worst = max(worst, rel)
        print(f"{name}: max relative error {rel:.3e}")
    if worst <= 1e-4:
        print("gradcheck: PASS")
        return EXIT_OK
    print("gradcheck: FAIL")
    return EXIT_SELFTEST


def _report_lines(report):
    lines = [
        ("upper_bound", fmt(report.upper)),
        ("upper_case", report.upper_case),
        ("balanced_order_R", str(report.R)),
        ("sigma_max", fmt(float(report.sigma[0])) if report.sigma.size else "0"),
        ("jB", fmt(report.jB)),
        ("deltaC_fro", fmt(report.deltaC_fro)),
        ("lower_sup", fmt(report.lower_sup)),
    ]
    if report.lower_l1 is not None:
        lines.append(("lower_l1", fmt(report.lower_l1)))
        lines.append(("l1_pair", f"{report.l1_pair[0]},{report.l1_pair[1]}"))
    return lines


def cmd_bounds(args):
    from .bounds import bounds_report

    try:
        problem = load_problem(args.problem, dim=args.dim)
    except (OSError, FileFormatError) as exc:
        return _fail(exc)
    report = bounds_report(problem, sharpen=args.sharpen)
    for key, val in _report_lines(report):
        print(f"{key:18s} {val}")
    if report.lower_l1 is None:
        print("lower_l1           (omitted: requires all-scalar systems)")
    payload = {
        "upper": report.upper,
        "upper_case": report.upper_case,
        "R": report.R,
        "sigma": report.sigma.tolist(),
        "jB": report.jB,
        "deltaC_fro": report.deltaC_fro,
        "lower_sup": report.lower_sup,
        "lower_l1": report.lower_l1,
        "l1_pair": list(report.l1_pair) if report.l1_pair else None,
    }
    print(json.dumps(payload))
    return EXIT_OK


def cmd_simulate(args):
    from .lti import StateSpace, impulse_response, negative_feedback
    from .neural import NeuralController, TaskBias, simulate

    try:
        result = load_result(args.result)
    except (OSError, FileFormatError) as exc:
        return _fail(exc)
    M = result.dbar.shape[0]
    if not 0 <= args.task < M:
        return _fail(f"task index {args.task} out of range (0..{M - 1})")
    i = args.task
    ctrl = NeuralController(W=result.vars.W, B=result.vars.B, C=result.vars.C)
    n_steps = int(round(args.t_max / args.dt))
    t = args.dt * np.arange(n_steps + 1)

    if args.open_loop:
        task = TaskBias(dbar=result.dbar[i], d=result.d[i], x_eq=result.x_eq[i])
        x0 = task.x_eq
        if args.impulse:
            x0 = x0 + ctrl.B[:, 0]  # unit-impulse state kick on the first input
        _, _, Y = simulate(ctrl, task, u=None, x0=x0, t_final=args.t_max, dt=args.dt)
        header = ["t"] + [f"y_{k + 1}" for k in range(ctrl.p)]
        rows = [[float(tk), *map(float, Y[j])] for j, tk in enumerate(t)]
        write_csv(args.out, header, rows)
        print(f"wrote {args.out}")
        return EXIT_OK

    if not args.plant or not args.problem:
        return _fail("closed-loop comparison requires --plant and --problem")
    try:
        plant = load_single_system(args.plant, index=i)
        problem = load_problem(args.problem, dim=ctrl.N)
    except (OSError, FileFormatError) as exc:
        return _fail(exc)
    if i >= problem.M:
        return _fail(f"task index {args.task} out of range for problem file")
    desired = problem.systems[i]
    A_lin = -np.eye(ctrl.N) + result.dbar[i][:, None] * ctrl.W
    approx = StateSpace(A_lin, ctrl.B, ctrl.C)
    g_des = impulse_response(negative_feedback(plant, desired), t)
    g_neu = impulse_response(negative_feedback(plant, approx), t)
    p, m = g_des.shape[1], g_des.shape[2]
    header = (
        ["t"]
        + [f"y_desired_{k + 1}" for k in range(p * m)]
        + [f"y_neural_{k + 1}" for k in range(p * m)]
    )
    rows = [
        [float(tk), *map(float, g_des[j].ravel()), *map(float, g_neu[j].ravel())]
        for j, tk in enumerate(t)
    ]
    write_csv(args.out, header, rows)
    print(f"wrote {args.out}")
    return EXIT_OK


def _write_record_csvs(out_dir, name, record):
    sweep = record.sweep
    rows = []
    for ti, seed in enumerate(record.seeds):
        for k, v in enumerate(record.values):
            row = [v, ti, seed, float(record.costs[ti, k])]
            if record.bounds is not None:
                row.append(float(record.bounds[ti, k]))
            rows.append(row)
    header = [sweep, "trial", "seed", "final_cost"]
    if record.bounds is not None:
        header.append("upper_bound")
    write_csv(os.path.join(out_dir, f"{name}.csv"), header, rows)
    qrows = [
        [v, float(a), float(b), float(c), float(d), float(e)]
        for v, a, b, c, d, e in record.quartiles()
    ]
    write_csv(
        os.path.join(out_dir, f"{name}_summary.csv"),
        [sweep, "min", "q1", "median", "q3", "max"],
        qrows,
    )


def cmd_bench(args):
    from . import benchmarks as bench

    os.makedirs(args.out, exist_ok=True)
    if args.experiment == "plants":
        catalog = bench.plant_catalog()
        plants = catalog.as_list()
        controllers = [bench.lqg_controller(p) for p in plants]
        save_problem(
            os.path.join(args.out, "plants.json"),
            plants,
            controller_dim=3,
            labels=list(catalog.names),
        )
        save_problem(
            os.path.join(args.out, "controllers.json"),
            controllers,
            controller_dim=3,
            labels=[f"lqg_{n}" for n in catalog.names],
        )
        print(f"wrote plants.json and controllers.json to {args.out}")
        return EXIT_OK
    common = dict(
        trials=args.trials, iters=args.iters, seed=args.seed, workers=args.workers
    )
    if args.experiment == "cost-vs-dim":
        record = bench.experiment_cost_vs_dim(**common)
        _write_record_csvs(args.out, "cost_vs_dim", record)
    elif args.experiment == "cost-vs-count":
        record = bench.experiment_cost_vs_count(**common)
        _write_record_csvs(args.out, "cost_vs_count", record)
    else:
        record = bench.experiment_bound_gap(**common)
        _write_record_csvs(args.out, "bound_gap", record)
        viol = int(np.sum(record.costs > record.bounds))
        print(f"bound violations: {viol}")
    print(f"wrote CSVs to {args.out}")
    return EXIT_OK


def main(argv=None):
    args = _parser().parse_args(argv)
    handlers = {
        "train": cmd_train,
        "gradcheck": cmd_gradcheck,
        "bounds": cmd_bounds,
        "simulate": cmd_simulate,
        "bench": cmd_bench,
    }
    try:
        return handlers[args.command](args)
    except MtctrlError as exc:
        return _fail(exc)


if __name__ == "__main__":
    sys.exit(main())
