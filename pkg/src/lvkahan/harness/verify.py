"""Verification suite: every identity of the system checked at seeded random points."""

from __future__ import annotations

import re
from dataclasses import dataclass, field

import numpy as np

from ..core import SystemParams, cumulative_sums
from ..dynamics import (
    QuadraticField,
    exact_flow,
    iterate_condition,
    kahan_iterates_closed,
    kahan_step_closed,
    kahan_step_generic,
    step_to_time,
)
from ..errors import (
    ConfigError,
    DomainEvent,
    EmptySet,
    LVError,
    NumericalJacobianFailure,
)
from ..integrals import Integral, independence_rank, liouville_set, superintegrable_set
from ..poisson import casimir_residual, check_involution, poisson_map_residual
from .config import ExperimentConfig, random_states


def rel_error(got, ref) -> float:
    """Componentwise relative error ``max_i |got_i - ref_i| / |ref_i|``.

    Components with ``ref_i == 0`` are compared absolutely.
    """
    got = np.asarray(got, dtype=float)
    ref = np.asarray(ref, dtype=float)
    denom = np.where(ref != 0.0, np.abs(ref), 1.0)
    return float(np.max(np.abs(got - ref) / denom)) if ref.size else 0.0


@dataclass
class CheckResult:
    check: str
    points: int
    worst_residual: float
    passed: bool
    seed: int
    extra: dict = field(default_factory=dict)

    def as_dict(self) -> dict:
        d = {"check": self.check, "points": self.points,
             "worst_residual": self.worst_residual, "pass": self.passed, "seed": self.seed}
        d.update(self.extra)
        return d


@dataclass
class VerificationReport:
    a: tuple[float, ...]
    seed: int
    checks: list[CheckResult]

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def as_dict(self) -> dict:
        return {"system": {"a": list(self.a)}, "seed": self.seed, "pass": self.passed,
                "checks": [c.as_dict() for c in self.checks]}


def integral_catalogue(params: SystemParams) -> list[Integral]:
    n = params.n
    cat = [Integral("H", (), params)]
    cat += [Integral("J", (k,), params) for k in range(1, n // 2 + 1)]
    cat += [Integral("F", (k,), params) for k in range(1, (n + 1) // 2 + 1)]
    if n % 2:
        cat.append(Integral("C", (), params))
    if len(params.B) >= 2:
        cat += [Integral("K", (i,), params) for i in sorted(params.A + params.C)]
    cat += superintegrable_set(params)
    cat += [Integral("x", (i,), params) for i in range(1, n + 1)]
    cat += [Integral("v", (i,), params) for i in range(1, n + 1)]
    return _dedup(cat)


def _dedup(items):
    seen, out = set(), []
    for d in items:
        if d.name not in seen:
            seen.add(d.name)
            out.append(d)
    return out


def resolve_integrals(params: SystemParams, selection) -> list[Integral]:
    if selection == "liouville":
        return liouville_set(params)
    if selection == "super":
        return superintegrable_set(params)
    if selection == "all":
        return _dedup(liouville_set(params) + superintegrable_set(params))
    by_name = {d.name: d for d in integral_catalogue(params)}
    out = []
    for name in selection:
        if name in by_name:
            out.append(by_name[name])
            continue
        m = re.fullmatch(r"G(\d+)_(\d+)", name)
        try:
            if m:
                out.append(Integral("G", (int(m[1]), int(m[2])), params))
                continue
        except LVError as exc:
            raise ConfigError("integrals", f"{name}: {exc}") from None
        raise ConfigError("integrals", f"unknown integral {name!r} for this system")
    return out


def _rank_check(name, integrals, points, expected, tol, seed):
    worst = 0
    ranks = []
    for x in points:
        if not integrals:
            r = 0
        else:
            try:
                r = independence_rank(integrals, x, tol).rank
            except (DomainEvent, EmptySet):
                continue
        ranks.append(r)
        worst = max(worst, abs(r - expected))
    return CheckResult(name, len(ranks), float(worst), worst == 0 and bool(ranks), seed,
                       {"expected_rank": expected, "min_rank": min(ranks) if ranks else None,
                        "set": [d.name for d in integrals]})


def run_verify(cfg: ExperimentConfig, seed: int | None = None) -> VerificationReport:
    """Run every check in order and collect worst scaled residuals."""
    seed = cfg.seed if seed is None else seed
    params = cfg.params
    n = params.n
    tol = cfg.tolerances
    pts = random_states(n, seed, cfg.points, *cfg.box)
    checks = []

    L = liouville_set(params)
    S = superintegrable_set(params)

    inv = check_involution(L, pts, tol.involution)
    checks.append(CheckResult("involution", inv.points, inv.worst, inv.passed, seed,
                              {"set": inv.names, "skipped": len(inv.skipped)}))

    if n % 2:
        res = [casimir_residual(x) for x in pts]
        worst = float(max(res))
        checks.append(CheckResult("casimir", len(res), worst, worst <= tol.involution, seed))

    exp_L = n // 2 if n % 2 == 0 else (n + 1) // 2
    checks.append(_rank_check("rank_liouville", L, pts, exp_L, tol.rank, seed))
    checks.append(_rank_check("rank_superintegrable", S, pts, n - 1, tol.rank, seed))

    fld = QuadraticField.from_params(params)

    worst, used, skipped = 0.0, 0, 0
    for eps in cfg.verify_eps:
        for x in pts:
            try:
                r = poisson_map_residual(lambda y: kahan_step_closed(params, y, eps), x)
            except (NumericalJacobianFailure, DomainEvent):
                skipped += 1
                continue
            used += 1
            worst = max(worst, r)
    checks.append(CheckResult("poisson_map", used, worst, worst <= tol.fd and used > 0, seed,
                              {"skipped": skipped}))

    worst, used, skipped = 0.0, 0, 0
    for eps in cfg.verify_eps:
        for x in pts:
            h0 = cumulative_sums(params, x).h
            try:
                t = step_to_time(h0, eps)
                r = rel_error(kahan_step_closed(params, x, eps), exact_flow(params, x, t))
            except (DomainEvent, LVError):
                skipped += 1
                continue
            used += 1
            worst = max(worst, r)
    checks.append(CheckResult("time_advance", used, worst, worst <= tol.identity and used > 0,
                              seed, {"skipped": skipped}))

    worst, used = 0.0, 0
    for eps in cfg.verify_eps:
        for x in pts:
            try:
                r = rel_error(kahan_step_generic(fld, x, 2.0 * eps), kahan_step_closed(params, x, eps))
            except DomainEvent:
                continue
            used += 1
            worst = max(worst, r)
    checks.append(CheckResult("kahan_closed_vs_generic", used, worst,
                              worst <= tol.identity and used > 0, seed))

    # near a pole of the exact solution both sides lose accuracy; a chain is
    # cut once the closed form's condition number exceeds 1 / pole_margin
    worst, used, truncated, skipped = 0.0, 0, 0, 0
    kappa_max = 1.0 / cfg.pole_margin if cfg.pole_margin > 0 else np.inf
    for eps in cfg.verify_eps:
        for x in pts:
            y = np.array(x)
            chain = []
            try:
                for m in range(1, cfg.iterate_max + 1):
                    if iterate_condition(params, x, eps, m) > kappa_max:
                        truncated += 1
                        break
                    y = kahan_step_closed(params, y, eps)
                    chain.append(rel_error(kahan_iterates_closed(params, x, eps, m), y))
            except (DomainEvent, LVError):
                skipped += 1
                continue
            used += 1
            worst = max([worst] + chain)
    checks.append(CheckResult("iterate_identity", used, worst,
                              worst <= tol.iterate and used > 0, seed,
                              {"iterate_max": cfg.iterate_max, "pole_margin": cfg.pole_margin,
                               "truncated": truncated, "skipped": skipped}))
    return VerificationReport(a=tuple(cfg.a), seed=seed, checks=checks)
