"""Experiment configuration: a YAML document validated into :class:`ExperimentConfig`.

See ``configs/experiment.yaml`` at the repository root for an annotated
example containing every field.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
import yaml

from ..core import SystemParams, build_system
from ..errors import BadRange, ConfigError, LVError

MODES = ("flow", "kahan", "kahan-generic", "rk4", "closed-iterates")
INTEGRAL_SETS = ("liouville", "super", "all")


def random_state(n: int, seed: int, lo: float = 0.5, hi: float = 2.0) -> np.ndarray:
    """Uniform state in ``[lo, hi)^n``; identical output for identical arguments."""
    return random_states(n, seed, 1, lo, hi)[0]


def random_states(n: int, seed: int, count: int, lo: float = 0.5, hi: float = 2.0) -> np.ndarray:
    if not lo < hi:
        raise BadRange(f"need lo < hi, got [{lo!r}, {hi!r}]")
    # PCG64 with a fixed 53-bit float mapping is stable across platforms
    gen = np.random.Generator(np.random.PCG64(seed))
    return lo + (hi - lo) * gen.random((count, n))


@dataclass(frozen=True)
class Tolerances:
    identity: float = 1e-11
    iterate: float = 1e-10
    involution: float = 1e-9
    rank: float = 1e-8
    fd: float = 1e-6
    drift: float = 1e-9


@dataclass(frozen=True)
class ExperimentConfig:
    a: tuple[float, ...]
    x0: tuple[float, ...] | None = None
    seed: int = 42
    box: tuple[float, float] = (0.5, 2.0)
    mode: str = "kahan"
    step: float = 0.05
    count: int = 100
    integrals: str | tuple[str, ...] = "all"
    tolerances: Tolerances = field(default_factory=Tolerances)
    out_dir: str = "out"
    trajectory_file: str = "trajectory.csv"
    report_file: str = "report.json"
    points: int = 20
    verify_eps: tuple[float, ...] = (0.01, 0.05, 0.1)
    iterate_max: int = 64
    pole_margin: float = 0.05
    rk4_steps: tuple[float, ...] = (0.01, 0.005, 0.0025)
    rk4_horizon: float = 1.0

    @property
    def params(self) -> SystemParams:
        return build_system(self.a)

    def initial_state(self) -> np.ndarray:
        if self.x0 is not None:
            return np.array(self.x0, dtype=float)
        return random_state(len(self.a), self.seed, *self.box)

    def with_overrides(self, **kw) -> "ExperimentConfig":
        kw = {k: v for k, v in kw.items() if v is not None}
        return replace(self, **kw)


def _floats(field_name, value, length=None):
    if not isinstance(value, (list, tuple)):
        raise ConfigError(field_name, "expected a list of numbers")
    try:
        out = tuple(float(v) for v in value)
    except (TypeError, ValueError):
        raise ConfigError(field_name, "expected a list of numbers") from None
    if length is not None and len(out) != length:
        raise ConfigError(field_name, f"expected {length} entries, got {len(out)}")
    if not all(np.isfinite(out)):
        raise ConfigError(field_name, "entries must be finite")
    return out


def _number(field_name, value, kind=float):
    if isinstance(value, bool):
        raise ConfigError(field_name, f"expected a {kind.__name__}")
    try:
        out = kind(value)
    except (TypeError, ValueError):
        raise ConfigError(field_name, f"expected a {kind.__name__}") from None
    if kind is int and out != value:
        raise ConfigError(field_name, "expected an integer")
    return out


def _section(doc, name):
    sec = doc.get(name, {}) or {}
    if not isinstance(sec, dict):
        raise ConfigError(name, "expected a mapping")
    return sec


_TOP_KEYS = {"system", "initial", "mode", "step", "count", "integrals",
             "tolerances", "output", "verify", "compare", "seed"}


def parse_config(doc: dict) -> ExperimentConfig:
    if not isinstance(doc, dict):
        raise ConfigError("<root>", "config must be a mapping")
    unknown = set(doc) - _TOP_KEYS
    if unknown:
        raise ConfigError(sorted(unknown)[0], "unknown field")

    system = _section(doc, "system")
    if "a" not in system:
        raise ConfigError("system.a", "missing")
    a = _floats("system.a", system["a"])
    try:
        build_system(a)
    except LVError as exc:
        raise ConfigError("system.a", str(exc)) from None
    n = len(a)

    kw: dict = {"a": a}
    initial = _section(doc, "initial")
    if "x0" in initial:
        kw["x0"] = _floats("initial.x0", initial["x0"], n)
    if "box" in initial:
        box = _floats("initial.box", initial["box"], 2)
        if not box[0] < box[1]:
            raise ConfigError("initial.box", "need lo < hi")
        kw["box"] = box
    seed = doc.get("seed", initial.get("seed"))
    if seed is not None:
        kw["seed"] = _number("seed", seed, int)
        if kw["seed"] < 0:
            raise ConfigError("seed", "must be non-negative")

    if "mode" in doc:
        if doc["mode"] not in MODES:
            raise ConfigError("mode", f"expected one of {', '.join(MODES)}")
        kw["mode"] = doc["mode"]
    if "step" in doc:
        kw["step"] = _number("step", doc["step"])
    if "count" in doc:
        kw["count"] = _number("count", doc["count"], int)
        if kw["count"] < 0:
            raise ConfigError("count", "must be >= 0")
    if "integrals" in doc:
        sel = doc["integrals"]
        if isinstance(sel, str):
            if sel not in INTEGRAL_SETS:
                raise ConfigError("integrals", f"expected one of {', '.join(INTEGRAL_SETS)} or a list")
            kw["integrals"] = sel
        elif isinstance(sel, list) and all(isinstance(s, str) for s in sel):
            kw["integrals"] = tuple(sel)
        else:
            raise ConfigError("integrals", "expected a set name or a list of integral names")

    tol = _section(doc, "tolerances")
    tkw = {}
    for key in Tolerances.__dataclass_fields__:
        if key in tol:
            val = _number(f"tolerances.{key}", tol[key])
            if not val > 0:
                raise ConfigError(f"tolerances.{key}", "must be > 0")
            tkw[key] = val
    extra = set(tol) - set(Tolerances.__dataclass_fields__)
    if extra:
        raise ConfigError(f"tolerances.{sorted(extra)[0]}", "unknown field")
    kw["tolerances"] = Tolerances(**tkw)

    out = _section(doc, "output")
    for src, dst in (("dir", "out_dir"), ("trajectory", "trajectory_file"), ("report", "report_file")):
        if src in out:
            if not isinstance(out[src], str) or not out[src]:
                raise ConfigError(f"output.{src}", "expected a non-empty string")
            kw[dst] = out[src]

    ver = _section(doc, "verify")
    if "points" in ver:
        kw["points"] = _number("verify.points", ver["points"], int)
        if kw["points"] < 1:
            raise ConfigError("verify.points", "must be >= 1")
    if "eps" in ver:
        kw["verify_eps"] = _floats("verify.eps", ver["eps"])
    if "iterate_max" in ver:
        kw["iterate_max"] = _number("verify.iterate_max", ver["iterate_max"], int)
        if kw["iterate_max"] < 0:
            raise ConfigError("verify.iterate_max", "must be >= 0")

    if "pole_margin" in ver:
        kw["pole_margin"] = _number("verify.pole_margin", ver["pole_margin"])
        if kw["pole_margin"] < 0:
            raise ConfigError("verify.pole_margin", "must be >= 0")

    cmp_ = _section(doc, "compare")
    if "rk4_steps" in cmp_:
        steps = _floats("compare.rk4_steps", cmp_["rk4_steps"])
        if len(steps) < 2 or any(s <= 0 for s in steps):
            raise ConfigError("compare.rk4_steps", "need at least two positive steps")
        kw["rk4_steps"] = steps
    if "horizon" in cmp_:
        kw["rk4_horizon"] = _number("compare.horizon", cmp_["horizon"])
        if not kw["rk4_horizon"] > 0:
            raise ConfigError("compare.horizon", "must be > 0")
    return ExperimentConfig(**kw)


def load_config(path) -> ExperimentConfig:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError("--config", f"cannot read {path}: {exc.strerror}") from None
    try:
        doc = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError("--config", f"invalid YAML: {exc}") from None
    return parse_config(doc or {})


DEFAULT_CONFIG = ExperimentConfig(a=(1.0, 1.0, 1.0, 1.0))
