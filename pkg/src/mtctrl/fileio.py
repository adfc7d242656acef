"""JSON problem/result schemas and CSV emission for the command-line tool.

Matrices are nested row-major arrays. Floats round-trip losslessly (Python
writes shortest-repr doubles); CSV numbers are emitted at full %.17g
precision with a dot decimal separator regardless of locale.
"""

import json
from dataclasses import dataclass

import numpy as np

from .lti import StateSpace
from .trainer import DecisionVars, MultiTaskProblem, TrainStatus


class FileFormatError(ValueError):
    """Problem or result file violates the schema; names the offending field."""


def fmt(x):
    """Full-precision text form of one float (%.17g equivalent)."""
    return format(float(x), ".17g")


def _matrix(obj, where, rows=None, cols=None):
    try:
        mat = np.asarray(obj, dtype=float)
    except (TypeError, ValueError) as exc:
        raise FileFormatError(f"{where}: not a numeric matrix ({exc})") from exc
    if mat.ndim == 1:
        mat = mat.reshape(-1, 1) if cols == 1 else mat.reshape(1, -1)
    if mat.ndim != 2:
        raise FileFormatError(f"{where}: expected a 2-d array, got ndim={mat.ndim}")
    if rows is not None and mat.shape[0] != rows:
        raise FileFormatError(f"{where}: expected {rows} rows, got {mat.shape[0]}")
    if cols is not None and mat.shape[1] != cols:
        raise FileFormatError(f"{where}: expected {cols} columns, got {mat.shape[1]}")
    if not np.all(np.isfinite(mat)):
        raise FileFormatError(f"{where}: contains non-finite values")
    return mat


def _system_from_dict(obj, where):
    if not isinstance(obj, dict):
        raise FileFormatError(f"{where}: expected an object with A, B, C")
    for key in ("A", "B", "C"):
        if key not in obj:
            raise FileFormatError(f"{where}.{key}: missing")
    A = _matrix(obj["A"], f"{where}.A")
    if A.shape[0] != A.shape[1]:
        raise FileFormatError(f"{where}.A: must be square, got {A.shape}")
    n = A.shape[0]
    B = np.asarray(obj["B"], dtype=float)
    if B.ndim == 1:
        B = B.reshape(-1, 1)
    B = _matrix(B, f"{where}.B", rows=n)
    C = np.asarray(obj["C"], dtype=float)
    if C.ndim == 1:
        C = C.reshape(1, -1)
    C = _matrix(C, f"{where}.C", cols=n)
    return StateSpace(A, B, C)


def _system_to_dict(sys, label=None):
    out = {"A": sys.A.tolist(), "B": sys.B.tolist(), "C": sys.C.tolist()}
    if label is not None:
        out["label"] = label
    return out


def load_problem(path, dim=None):
    """Read a problem file into a MultiTaskProblem.

    ``dim`` overrides the file's controller_dim. Raises FileFormatError with
    a field-addressed message on any schema violation.
    """
    with open(path, "r", encoding="utf-8") as fh:
        try:
            data = json.load(fh)
        except json.JSONDecodeError as exc:
            raise FileFormatError(f"invalid JSON: {exc}") from exc
    if not isinstance(data, dict):
        raise FileFormatError("top level: expected an object")
    if "systems" not in data:
        raise FileFormatError("systems: missing")
    raw = data["systems"]
    if not isinstance(raw, list) or not raw:
        raise FileFormatError("systems: expected a non-empty list")
    systems = tuple(
        _system_from_dict(obj, f"systems[{i}]") for i, obj in enumerate(raw)
    )
    if dim is None:
        dim = data.get("controller_dim")
        if dim is None:
            raise FileFormatError("controller_dim: missing (or pass --dim)")
    try:
        N = int(dim)
    except (TypeError, ValueError) as exc:
        raise FileFormatError(f"controller_dim: not an integer ({dim!r})") from exc
    try:
        return MultiTaskProblem(systems=systems, N=N)
    except Exception as exc:
        raise FileFormatError(f"problem validation: {exc}") from exc


def save_problem(path, systems, controller_dim, labels=None):
    labels = labels or [None] * len(systems)
    data = {
        "systems": [_system_to_dict(s, l) for s, l in zip(systems, labels)],
        "controller_dim": int(controller_dim),
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(data, fh, indent=1)
        fh.write("\n")


def load_single_system(path, index=0):
    """Read one system: either a bare {A,B,C} object or systems[index]."""
    with open(path, "r", encoding="utf-8") as fh:
        try:
            data = json.load(fh)
        except json.JSONDecodeError as exc:
            raise FileFormatError(f"invalid JSON: {exc}") from exc
    if isinstance(data, dict) and "systems" in data:
        raw = data["systems"]
        if not isinstance(raw, list) or index >= len(raw):
            raise FileFormatError(f"systems[{index}]: missing")
        return _system_from_dict(raw[index], f"systems[{index}]")
    return _system_from_dict(data, "system")


@dataclass(frozen=True)
class ResultData:
    """Deserialized training result (decision variables plus per-task data)."""

    vars: DecisionVars
    dbar: np.ndarray  # (M, N)
    d: np.ndarray
    x_eq: np.ndarray
    cost_history: np.ndarray
    grad_norm_history: np.ndarray
    status: str
    final_cost: float
    config: dict
    tool_version: str


def save_result(path, result, config, version):
    ctrl = result.controller
    tasks = [
        {
            "theta": result.vars.theta[i].tolist(),
            "dbar": t.dbar.tolist(),
            "d": t.d.tolist(),
            "x_eq": t.x_eq.tolist(),
        }
        for i, t in enumerate(ctrl.tasks)
    ]
    data = {
        "tool_version": version,
        "status": result.status.value,
        "final_cost": result.final_cost,
        "config": {
            "max_iters": config.max_iters,
            "grad_tol": config.grad_tol,
            "armijo_c": config.armijo_c,
            "armijo_shrink": config.armijo_shrink,
            "armijo_init_step": config.armijo_init_step,
            "armijo_max_backtracks": config.armijo_max_backtracks,
            "seed": config.seed,
            "init_spectral_norm": config.init_spectral_norm,
            "method": config.method,
        },
        "W": ctrl.W.tolist(),
        "B": ctrl.B.tolist(),
        "C": ctrl.C.tolist(),
        "tasks": tasks,
        "cost_history": result.cost_history.tolist(),
        "grad_norm_history": result.grad_norm_history.tolist(),
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(data, fh, indent=1)
        fh.write("\n")


def load_result(path):
    with open(path, "r", encoding="utf-8") as fh:
        try:
            data = json.load(fh)
        except json.JSONDecodeError as exc:
            raise FileFormatError(f"invalid JSON: {exc}") from exc
    for key in ("W", "B", "C", "tasks"):
        if key not in data:
            raise FileFormatError(f"{key}: missing")
    W = _matrix(data["W"], "W")
    N = W.shape[0]
    B = _matrix(data["B"], "B", rows=N)
    C = _matrix(data["C"], "C", cols=N)
    tasks = data["tasks"]
    if not isinstance(tasks, list) or not tasks:
        raise FileFormatError("tasks: expected a non-empty list")
    theta, dbar, dvec, x_eq = [], [], [], []
    for i, t in enumerate(tasks):
        for key in ("theta", "dbar", "d", "x_eq"):
            if key not in t:
                raise FileFormatError(f"tasks[{i}].{key}: missing")
        theta.append(np.asarray(t["theta"], dtype=float))
        dbar.append(np.asarray(t["dbar"], dtype=float))
        dvec.append(np.asarray(t["d"], dtype=float))
        x_eq.append(np.asarray(t["x_eq"], dtype=float))
    vars = DecisionVars(W=W, theta=np.vstack(theta), B=B, C=C)
    return ResultData(
        vars=vars,
        dbar=np.vstack(dbar),
        d=np.vstack(dvec),
        x_eq=np.vstack(x_eq),
        cost_history=np.asarray(data.get("cost_history", []), dtype=float),
        grad_norm_history=np.asarray(data.get("grad_norm_history", []), dtype=float),
        status=data.get("status", TrainStatus.MAX_ITERS.value),
        final_cost=float(data.get("final_cost", float("nan"))),
        config=data.get("config", {}),
        tool_version=data.get("tool_version", ""),
    )


def write_csv(path, header, rows):
    """Comma-separated, LF line endings, header row mandatory."""
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(
                ",".join(fmt(x) if isinstance(x, float) else str(x) for x in row)
                + "\n"
            )
