"""Command-line entry point: ``hilfer run <config.json>`` and ``hilfer selftest``.

A scenario is a JSON document (schema version 1)::

    {
      "schema": 1,
      "operator": {"kind": "dirichlet_1d", "length": 3.14159, "modes": 8},
      "order": {"mu": 0.5, "nu": 0.5},
      "T": 1.0,
      "grid": {"cells": 1024, "grading": 2.0, "toward": "left"},
      "task": "solve",
      "params": {"u0": {"unit": 1}},
      "seed": 0
    }

Unknown keys are errors. Exit codes: 0 success, 2 invalid input, 3 a
verification tolerance was breached.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import math
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from ._accel import set_threads
from .control import (
    ControlSignal,
    duality_sides,
    synthesize_exact_control,
    synthesize_localized_control,
    verify_steering,
)
from .errors import HilferError, NumericalFailure, ParameterError
from .evolution import (
    ModalState,
    mean_state,
    solve_adjoint,
    solve_homogeneous,
)
from .fractional_calculus import TimeGrid
from .order import HilferOrder
from .spectral_operator import (
    dirichlet_laplacian_1d,
    dirichlet_laplacian_rect,
    from_matrix,
    load_matrix,
    robin_laplacian_1d_fd,
    spectral_power,
    window_gram,
)

log = logging.getLogger("hilfer")

SCHEMA_VERSION = 1
TASKS = (
    "solve",
    "adjoint",
    "control-exact",
    "control-localized",
    "duality",
    "ucp-gram",
    "selftest",
)
DEFAULT_TOL = {"control-exact": 1e-6, "control-localized": 1e-3, "duality": 1e-5}

_TOP_KEYS = {"schema", "operator", "order", "T", "grid", "task", "params", "seed"}
_OPERATOR_KEYS = {
    "dirichlet_1d": {"kind", "length", "modes", "points", "power"},
    "dirichlet_rect": {"kind", "lx", "ly", "modes", "points", "power"},
    "robin_1d_fd": {"kind", "length", "beta", "grid_size", "modes", "power"},
    "matrix": {"kind", "path", "weights", "modes", "power"},
}
_GRID_KEYS = {"cells", "grading", "toward"}
_PARAM_KEYS = {
    "solve": {"u0"},
    "adjoint": {"v0"},
    "control-exact": {"target", "tolerance", "quadrature", "mean_mode"},
    "control-localized": {
        "target", "window", "ridge", "mean_mode", "time_cells", "window_modes", "tolerance"
    },
    "duality": {"control", "v0", "tolerance"},
    "ucp-gram": {"window", "points", "precision"},
    "selftest": set(),
}


# ---------------------------------------------------------------------------
# configuration
# ---------------------------------------------------------------------------


def load_config(path: str | Path) -> dict:
    try:
        with open(path) as fh:
            cfg = json.load(fh)
    except OSError as exc:
        raise ParameterError(f"cannot read config {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ParameterError(f"{path}: invalid JSON ({exc})") from exc
    validate_config(cfg)
    return cfg


def validate_config(cfg: dict) -> None:
    """Reject unknown keys and out-of-range values before any work."""
    if not isinstance(cfg, dict):
        raise ParameterError("config must be a JSON object")
    _no_unknown(cfg, _TOP_KEYS, "config")
    if cfg.get("schema") != SCHEMA_VERSION:
        raise ParameterError(f"config schema must be {SCHEMA_VERSION}")
    task = cfg.get("task")
    if task not in TASKS:
        raise ParameterError(f"task must be one of {', '.join(TASKS)}")
    if task == "selftest":
        return
    for key in ("operator", "order", "T", "grid"):
        if key not in cfg:
            raise ParameterError(f"config is missing {key!r}")
    op = cfg["operator"]
    if not isinstance(op, dict) or op.get("kind") not in _OPERATOR_KEYS:
        raise ParameterError(f"operator.kind must be one of {', '.join(_OPERATOR_KEYS)}")
    _no_unknown(op, _OPERATOR_KEYS[op["kind"]], "operator")
    _no_unknown(cfg["order"], {"mu", "nu"}, "order")
    HilferOrder(float(cfg["order"]["mu"]), float(cfg["order"]["nu"]))
    if not float(cfg["T"]) > 0.0:
        raise ParameterError("T must be positive")
    _no_unknown(cfg["grid"], _GRID_KEYS, "grid")
    _no_unknown(cfg.get("params", {}), _PARAM_KEYS[task], "params")


def _no_unknown(d, allowed: set, where: str) -> None:
    if not isinstance(d, dict):
        raise ParameterError(f"{where} must be an object")
    extra = sorted(set(d) - allowed)
    if extra:
        raise ParameterError(f"unknown key(s) in {where}: {', '.join(extra)}")


def build_operator(spec: dict, base: Path | None = None):
    kind = spec["kind"]
    modes = int(spec["modes"])
    if kind == "dirichlet_1d":
        op = dirichlet_laplacian_1d(float(spec["length"]), modes, int(spec.get("points", 1024)))
    elif kind == "dirichlet_rect":
        op = dirichlet_laplacian_rect(
            float(spec["lx"]), float(spec["ly"]), modes, int(spec.get("points", 128))
        )
    elif kind == "robin_1d_fd":
        op = robin_laplacian_1d_fd(
            float(spec["length"]), float(spec["beta"]), int(spec["grid_size"]), modes
        )
    else:
        path = Path(spec["path"])
        if base is not None and not path.is_absolute():
            path = base / path
        K = load_matrix(path)
        w = np.ones(K.shape[0]) if spec.get("weights") is None else np.asarray(spec["weights"])
        op = from_matrix(K, w, modes)
    if "power" in spec:
        op = spectral_power(op, float(spec["power"]))
    return op


def build_grid(cfg: dict, default_toward: str) -> TimeGrid:
    g = cfg["grid"]
    mu = float(cfg["order"]["mu"])
    r = g.get("grading")
    r = max(1.0, 1.0 / mu) if r is None else float(r)
    return TimeGrid.graded(float(cfg["T"]), int(g["cells"]), r, g.get("toward", default_toward))


def modal_vector(spec, modes: int, rng: np.random.Generator, name: str) -> ModalState:
    """``[c_1, ...]``, ``{"unit": n}`` (one based), ``{"power": p}`` for
    ``n^-p`` or ``{"random": true}``."""
    if isinstance(spec, list):
        if len(spec) != modes:
            raise ParameterError(f"{name} needs {modes} coefficients, got {len(spec)}")
        return ModalState(np.asarray(spec, dtype=float))
    if isinstance(spec, dict) and len(spec) == 1:
        (key, val), = spec.items()
        if key == "unit":
            return ModalState.unit(modes, int(val) - 1)
        if key == "power":
            return ModalState(np.arange(1, modes + 1, dtype=float) ** (-float(val)))
        if key == "random" and val:
            return ModalState(rng.standard_normal(modes))
    raise ParameterError(f"cannot interpret {name}={spec!r}")


def _window(spec):
    if spec is None:
        return None
    arr = np.asarray(spec, dtype=float)
    if arr.size not in (2, 4):
        raise ParameterError("window must be [a, b] or [[ax, bx], [ay, by]]")
    return arr


# ---------------------------------------------------------------------------
# tasks
# ---------------------------------------------------------------------------


def run_scenario(cfg: dict, out: Path, base: Path | None = None) -> dict:
    """Execute a validated scenario, write its files and return the summary."""
    task = cfg["task"]
    if task == "selftest":
        results = selftest()
        emit_report(out, cfg, {"selftest": results}, {})
        if not all(r["passed"] for r in results):
            raise NumericalFailure("selftest failed")
        return {"selftest": results}
    rng = np.random.default_rng(int(cfg.get("seed", 0)))
    op = build_operator(cfg["operator"], base)
    order = HilferOrder(float(cfg["order"]["mu"]), float(cfg["order"]["nu"]))
    params = cfg.get("params", {})
    M = op.modes
    files: dict[str, str] = {}
    summary: dict = {"task": task}
    if task == "solve":
        grid = build_grid(cfg, "left")
        u0 = modal_vector(params.get("u0", {"unit": 1}), M, rng, "u0")
        traj = solve_homogeneous(op, order, u0, grid)
        traj.to_csv(out / "trajectory.csv")
        traj.to_json(out / "trajectory.json")
        files.update(trajectory="trajectory.csv", sidecar="trajectory.json")
        summary["terminal"] = traj.states[-1].tolist()
        summary["mean_terminal"] = mean_state(traj, grid.T).coeffs.tolist()
    elif task == "adjoint":
        grid = build_grid(cfg, "right")
        v0 = modal_vector(params.get("v0", {"unit": 1}), M, rng, "v0")
        traj = solve_adjoint(op, order, v0, grid)
        traj.to_csv(out / "adjoint.csv")
        traj.to_json(out / "adjoint.json")
        files.update(trajectory="adjoint.csv", sidecar="adjoint.json")
        summary["initial"] = traj.states[0].tolist()
    elif task == "control-exact":
        grid = build_grid(cfg, "right")
        target = modal_vector(params.get("target", {"unit": 1}), M, rng, "target")
        f = synthesize_exact_control(op, order.mu, target, grid)
        rep = verify_steering(
            op, order, f, target, grid, bool(params.get("mean_mode", False)),
            params.get("quadrature", "samples"),
        )
        f.to_csv(out / "control.csv")
        rep.to_json(out / "report.json")
        files.update(control="control.csv", report="report.json")
        summary.update(rep.to_dict())
        _check_tol(task, rep.rel_error, params)
    elif task == "control-localized":
        grid = build_grid(cfg, "left")
        target = modal_vector(params.get("target", {"unit": 1}), M, rng, "target")
        mean_mode = bool(params.get("mean_mode", False))
        window = _window(params.get("window"))
        f = synthesize_localized_control(
            op, order, window, target, grid,
            params.get("ridge"), mean_mode,
            int(params.get("time_cells", 32)), params.get("window_modes"),
        )
        rep = verify_steering(op, order, f, target, grid, mean_mode)
        f.to_csv(out / "control.csv")
        rep.to_json(out / "report.json")
        files.update(control="control.csv", report="report.json")
        summary.update(rep.to_dict(), window=f.window_descriptor(), info=f.info)
        _check_tol(task, rep.abs_error, params)
    elif task == "duality":
        grid = build_grid(cfg, "right")
        v0 = modal_vector(params.get("v0", {"random": True}), M, rng, "v0")
        f = _duality_control(params.get("control", {"random": 4}), grid, M, rng)
        lhs, rhs = duality_sides(op, order, f, v0, grid)
        res = abs(lhs - rhs)
        _write_rows(out / "duality.csv", ["lhs", "rhs", "residual"], [[lhs, rhs, res]])
        files["duality"] = "duality.csv"
        summary.update(lhs=lhs, rhs=rhs, residual=res)
        _check_tol(task, res, params)
    elif task == "ucp-gram":
        window = _window(params.get("window"))
        G, gmin = window_gram(
            op, window, M, int(params.get("points", 1024)), params.get("precision", "double")
        )
        _write_rows(out / "gram.csv", [f"m{n + 1}" for n in range(M)], G.tolist())
        files["gram"] = "gram.csv"
        summary["min_eigenvalue"] = gmin
        if not gmin > 0.0:
            raise NumericalFailure(f"window Gram is not positive definite (min {gmin:.3e})")
    emit_report(out, cfg, summary, files)
    return summary


def _duality_control(spec, grid: TimeGrid, M: int, rng) -> ControlSignal:
    """``{"random": K}``: random combinations of ``cos(k pi t / T)``, ``k < K``;
    ``{"constant": [c_1, ...]}``: time-independent modal forcing."""
    t = grid.nodes
    if isinstance(spec, dict) and "random" in spec:
        K = int(spec["random"])
        basis = np.stack([np.cos(k * math.pi * t / grid.T) for k in range(K)], axis=1)
        return ControlSignal(grid, basis @ rng.standard_normal((K, M)))
    if isinstance(spec, dict) and "constant" in spec:
        c = np.asarray(spec["constant"], dtype=float)
        if c.shape != (M,):
            raise ParameterError(f"constant control needs {M} coefficients")
        return ControlSignal(grid, np.tile(c, (t.size, 1)))
    raise ParameterError(f"cannot interpret control={spec!r}")


def _check_tol(task: str, value: float, params: dict) -> None:
    tol = float(params.get("tolerance", DEFAULT_TOL[task]))
    if not value <= tol:
        raise NumericalFailure(f"{task}: achieved {value:.3e} exceeds tolerance {tol:.1e}")


# ---------------------------------------------------------------------------
# output
# ---------------------------------------------------------------------------


def _fmt(x) -> str:
    return f"{float(x):.17g}"


def _write_rows(path: Path, header: list[str], rows) -> None:
    with open(path, "w", newline="\n") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(_fmt(v) for v in row) + "\n")


def config_hash(cfg: dict) -> str:
    canon = json.dumps(cfg, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canon.encode()).hexdigest()


def emit_report(out: Path, cfg: dict, summary: dict, files: dict) -> Path:
    """Write ``summary.json`` (deterministic) and ``metadata.json``.

    The timestamp lives only in the metadata file so that identical
    configurations reproduce ``summary.json`` byte for byte.
    """
    try:
        with open(out / "summary.json", "w") as fh:
            json.dump(_plain(summary), fh, indent=2, sort_keys=True)
            fh.write("\n")
        meta = {
            "version": __version__,
            "config_hash": config_hash(cfg),
            "files": files,
            "tolerances": {k: v for k, v in DEFAULT_TOL.items()},
            "timestamp": time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime()),
        }
        for key in ("residual", "terminal_error", "relative_error", "min_eigenvalue"):
            if key in summary:
                meta.setdefault("achieved", {})[key] = summary[key]
        with open(out / "metadata.json", "w") as fh:
            json.dump(_plain(meta), fh, indent=2, sort_keys=True)
            fh.write("\n")
    except OSError as exc:
        raise OSError(f"cannot write report into {out}: {exc}") from exc
    return out / "summary.json"


def _plain(x):
    if isinstance(x, dict):
        return {str(k): _plain(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_plain(v) for v in x]
    if isinstance(x, np.ndarray):
        return _plain(x.tolist())
    if isinstance(x, np.generic):
        return x.item()
    return x


# ---------------------------------------------------------------------------
# selftest
# ---------------------------------------------------------------------------


def selftest() -> list[dict]:
    """A quick pass over the library's core invariants."""
    from scipy.special import erfcx

    from .fractional_calculus import SampledFunction, power_rule, rl_integral_left
    from .special_functions import ml_eval, ml_time_integral

    checks = []

    def check(name, err, tol):
        checks.append({"name": name, "error": float(err), "tol": tol, "passed": bool(err <= tol)})

    check("E_{1,1}(-1) = 1/e", abs(ml_eval(1, 1, -1.0) - math.exp(-1.0)) / math.exp(-1.0), 1e-13)
    x = np.array([0.25, 1.0, 4.0])
    ref = erfcx(x)
    check("E_{1/2,1}(-x) = erfcx(x)", float(np.max(np.abs(ml_eval(0.5, 1.0, -x) - ref) / ref)), 1e-10)
    check(
        "integral identity",
        abs(ml_time_integral(0.5, 1.0, 1.0) - 0.5724164238441930) / 0.5724164238441930,
        1e-12,
    )
    g = TimeGrid.uniform(1.0, 256)
    I = rl_integral_left(SampledFunction(g, g.nodes), 0.5).values[-1]
    check("power rule", abs(I - power_rule(0.5, 1.0, 1.0)), 1e-4)
    op = dirichlet_laplacian_1d(math.pi, 4)
    check("orthonormality", float(np.max(np.abs(op.gram() - np.eye(4)))), 1e-10)
    order = HilferOrder(0.5, 0.5)
    traj = solve_homogeneous(op, order, ModalState.unit(4, 0), TimeGrid.uniform(1.0, 8))
    check("mean state at 0", float(np.max(np.abs(mean_state(traj, 0.0).coeffs - [1, 0, 0, 0]))), 1e-13)
    grid = TimeGrid.uniform(1.0, 64)
    phi = ModalState(1.0 / np.arange(1, 5) ** 2)
    f = synthesize_exact_control(op, 1.0, phi, grid)
    rep = verify_steering(op, HilferOrder(1.0, 0.5), f, phi, grid, quadrature="analytic")
    check("exact steering mu=1", rep.rel_error, 1e-10)
    gd = TimeGrid.graded(1.0, 1024, 4.0, "right")
    lhs, rhs = duality_sides(op, order, ControlSignal(gd, np.ones((gd.size, 4))), phi, gd)
    check("duality identity", abs(lhs - rhs), 1e-5)
    check("window Gram positive", 0.0 if window_gram(op, (0.3, 0.6), 4)[1] > 0 else 1.0, 0.0)
    return checks


# ---------------------------------------------------------------------------
# entry point
# ---------------------------------------------------------------------------


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="hilfer", description=__doc__.split("\n\n")[0])
    p.add_argument("--version", action="version", version=f"hilfer {__version__}")
    sub = p.add_subparsers(dest="command", required=True)
    run = sub.add_parser("run", help="run a scenario described by a JSON config")
    run.add_argument("config")
    run.add_argument("--out", default=None, help="existing output directory (default: cwd)")
    st = sub.add_parser("selftest", help="check the core invariants")
    st.add_argument("--out", default=None, help="also write the report here")
    for s in (run, st):
        s.add_argument("--threads", type=int, default=None, help="numba worker threads")
        s.add_argument("--log-level", default="WARNING")
    return p


def main(argv: list[str] | None = None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(level=args.log_level.upper(), format="%(levelname)s %(message)s")
    try:
        set_threads(args.threads)
        if args.command == "selftest":
            results = selftest()
            for r in results:
                flag = "PASS" if r["passed"] else "FAIL"
                print(f"{flag} {r['name']}: error {r['error']:.2e} (tol {r['tol']:.0e})")
            if args.out is not None:
                out = _out_dir(args.out)
                emit_report(out, {"task": "selftest"}, {"selftest": results}, {})
            return 0 if all(r["passed"] for r in results) else 3
        cfg = load_config(args.config)
        out = _out_dir(args.out)
        summary = run_scenario(cfg, out, Path(args.config).resolve().parent)
        log.info("finished %s", summary.get("task"))
        return 0
    except NumericalFailure as exc:
        print(f"hilfer: numerical failure: {exc}", file=sys.stderr)
        return 3
    except (HilferError, ValueError, KeyError, TypeError) as exc:
        print(f"hilfer: invalid input: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"hilfer: {exc}", file=sys.stderr)
        return 2


def _out_dir(path: str | None) -> Path:
    out = Path(os.getcwd() if path is None else path)
    if not out.is_dir():
        raise ParameterError(f"output directory {out} does not exist")
    return out


if __name__ == "__main__":
    sys.exit(main())
