"""Trajectory runs, the Kahan-vs-RK4 comparison, and deterministic file output."""

from __future__ import annotations

import csv
import io
import json
import math
from pathlib import Path

import numpy as np

from ..core import cumulative_sums
from ..dynamics import exact_flow, rk4_step, step_to_time, trajectory
from ..errors import DomainEvent, LVError
from .config import ExperimentConfig
from .verify import CheckResult, resolve_integrals

EXIT_OK = 0
EXIT_FAIL = 1
EXIT_DOMAIN = 2
EXIT_CONFIG = 3


def fmt(x) -> str:
    """Shortest decimal that round-trips (``repr`` of a Python float)."""
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return repr(float(x))


def _clean(obj):
    """Make ``obj`` JSON-safe: numpy scalars to Python, non-finite floats to strings."""
    if isinstance(obj, dict):
        return {k: _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        return x if math.isfinite(x) else repr(x)
    return obj


def dumps(obj) -> str:
    return json.dumps(_clean(obj), indent=2) + "\n"


def trajectory_csv(record) -> str:
    n = record.states.shape[1]
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["step", "t"] + [f"x{i}" for i in range(1, n + 1)] + record.names)
    for k in range(len(record.steps)):
        w.writerow([fmt(record.steps[k]), fmt(record.times[k])]
                   + [fmt(v) for v in record.states[k]]
                   + [fmt(v) for v in record.values[k]])
    return buf.getvalue()


def _write(path: Path, text: str):
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        fh.write(text)


def run_experiment(cfg: ExperimentConfig, out_dir=None) -> tuple[int, dict]:
    """Run ``cfg.mode`` for ``cfg.count`` steps; write the CSV and JSON report.

    Returns ``(exit_code, report)``.
    """
    params = cfg.params
    x0 = cfg.initial_state()
    integrals = resolve_integrals(params, cfg.integrals)
    rec = trajectory(cfg.mode, params, x0, cfg.step, cfg.count, integrals)
    out = Path(out_dir or cfg.out_dir)
    report = {
        "mode": cfg.mode,
        "system": {"a": list(cfg.a)},
        "x0": x0.tolist(),
        "seed": cfg.seed,
        "step": cfg.step,
        "count": cfg.count,
        "steps_completed": int(len(rec.steps) - 1),
        "h0": cumulative_sums(params, x0).h,
        "drift": rec.drift,
        "events": [rec.event] if rec.event else [],
    }
    _write(out / cfg.trajectory_file, trajectory_csv(rec))
    _write(out / cfg.report_file, dumps(report))
    return (EXIT_DOMAIN if rec.event else EXIT_OK), report


def _nonlinear(integrals):
    return [d for d in integrals if d.kind not in ("H", "x", "v")]


def _rk4_run(params, x0, h, steps):
    x = np.array(x0)
    xs = [x]
    for _ in range(steps):
        x = rk4_step(params, x, h)
        xs.append(x)
    return np.array(xs)


def _max_drift(integrals, states) -> float:
    vals = np.array([[d(x) for d in integrals] for x in states])
    base = vals[0]
    denom = np.where(base != 0.0, np.abs(base), 1.0)
    return float(np.max(np.abs(vals - base) / denom))


def run_compare(cfg: ExperimentConfig, out_dir=None) -> tuple[int, dict]:
    """Kahan against RK4 at the same time step, plus an RK4 order estimate.

    The Kahan run uses ``eps = cfg.step`` for ``cfg.count`` steps; RK4 uses
    ``h = t_eps`` (the time advanced by one Kahan step) for the same count.
    The order estimate runs RK4 over ``cfg.rk4_horizon`` at each of
    ``cfg.rk4_steps`` and measures integral drift; successive halvings of
    ``h`` should shrink it by 16 (accepted within a factor 2).
    """
    params = cfg.params
    tol = cfg.tolerances
    x0 = cfg.initial_state()
    seed = cfg.seed
    integrals = resolve_integrals(params, cfg.integrals)
    nonlin = _nonlinear(integrals)
    h0 = cumulative_sums(params, x0).h
    out = Path(out_dir or cfg.out_dir)
    rows = []
    checks = []
    events = []

    rec = trajectory("kahan", params, x0, cfg.step, cfg.count, integrals)
    if rec.event:
        events.append(dict(rec.event, method="kahan"))
    k_drift = max(rec.drift.values(), default=0.0)
    for name, d in rec.drift.items():
        rows.append(["kahan", fmt(cfg.step), fmt(len(rec.steps) - 1), fmt(rec.times[-1]), name, fmt(d)])
    checks.append(CheckResult("kahan_drift", int(len(rec.steps)), k_drift,
                              bool(k_drift <= tol.drift and not rec.event), seed))

    try:
        t_eps = step_to_time(h0, cfg.step)
    except LVError as exc:
        t_eps = None
        events.append({"method": "rk4", "type": type(exc).__name__, "message": str(exc)})
    if t_eps is not None:
        try:
            xs = _rk4_run(params, x0, t_eps, cfg.count)
            # drift of the nonlinear integrals; RK4 conserves linear ones exactly
            metric = nonlin or integrals
            r_drift = _max_drift(metric, xs) if metric else 0.0
            for d in integrals:
                rows.append(["rk4", fmt(t_eps), fmt(cfg.count), fmt(cfg.count * t_eps), d.name,
                             fmt(_max_drift([d], xs))])
            checks.append(CheckResult("rk4_drift_nonzero", cfg.count + 1, r_drift,
                                      bool(r_drift > 0.0 and bool(nonlin)), seed,
                                      {"metric": "nonlinear integrals" if nonlin else "none"}))
        except DomainEvent as exc:
            events.append({"method": "rk4", "type": type(exc).__name__, "message": str(exc)})

    errs = []
    try:
        for h in cfg.rk4_steps:
            steps = max(1, round(cfg.rk4_horizon / h))
            xs = _rk4_run(params, x0, cfg.rk4_horizon / steps, steps)
            if nonlin:
                e = _max_drift(nonlin, xs)
                metric = "integral drift"
            else:
                ref = exact_flow(params, x0, cfg.rk4_horizon)
                e = float(np.max(np.abs(xs[-1] - ref) / np.maximum(np.abs(ref), 1e-300)))
                metric = "global error"
            errs.append(e)
            rows.append(["rk4-order", fmt(cfg.rk4_horizon / steps), fmt(steps), fmt(cfg.rk4_horizon),
                         metric, fmt(e)])
        ratios = [errs[k] / errs[k + 1] if errs[k + 1] > 0 else math.inf for k in range(len(errs) - 1)]
        halvings = [cfg.rk4_steps[k] / cfg.rk4_steps[k + 1] for k in range(len(errs) - 1)]
        # log2 of how far each ratio sits from q^4; a factor 2 either way is accepted
        worst = max(abs(math.log2(r / q ** 4)) if r > 0 and math.isfinite(r) else math.inf
                    for r, q in zip(ratios, halvings))
        orders = [math.log(r) / math.log(q) if r > 0 and math.isfinite(r) else math.nan
                  for r, q in zip(ratios, halvings)]
        checks.append(CheckResult("rk4_order", len(errs), worst, bool(worst <= 1.0), seed,
                                  {"errors": errs, "ratios": ratios, "observed_order": orders}))
    except DomainEvent as exc:
        events.append({"method": "rk4-order", "type": type(exc).__name__, "message": str(exc)})

    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["method", "step", "steps", "T", "integral", "drift"])
    w.writerows(rows)
    _write(out / "compare.csv", buf.getvalue())
    report = {"system": {"a": list(cfg.a)}, "x0": x0.tolist(), "seed": seed, "h0": h0,
              "eps": cfg.step, "count": cfg.count,
              "checks": [c.as_dict() for c in checks], "events": events,
              "pass": all(c.passed for c in checks)}
    _write(out / "compare.json", dumps(report))
    if events:
        return EXIT_DOMAIN, report
    return (EXIT_OK if report["pass"] else EXIT_FAIL), report
