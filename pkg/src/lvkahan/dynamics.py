"""Exact flow, the Kahan map (closed form and generic), closed-form iterates, RK4.

Step-size convention: ``eps`` always denotes the parameter of the closed
Kahan map, which is the Kahan discretisation with step ``h = 2 * eps``.
The generic solver :func:`kahan_step_generic` takes ``h`` directly.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
import scipy.linalg

from .core import SystemParams, as_state, cumulative_sums, interaction_matrix, vector_field
from .errors import (
    BlowupError,
    DimensionMismatch,
    DomainEvent,
    MapPoleError,
    OutOfRange,
    SingularSystem,
)

ZERO_H_REL = 1e-13
PIVOT_TOL = 1e-12


def _h_is_zero(h0: float, scale: float) -> bool:
    # h0 = a.x carries rounding of order eps * sum |a_i x_i|
    return abs(h0) <= ZERO_H_REL * scale


def _h_scale(params: SystemParams, x: np.ndarray) -> float:
    return float(np.sum(np.abs(params.a * x)))


# -- continuous time ------------------------------------------------------


@dataclass(frozen=True)
class FlowTime:
    t: float
    h0: float
    f_value: float


def f_of_t(h0: float, t: float) -> float:
    """``(e^{h0 t} - 1) / ((e^{h0 t} + 1) h0) = tanh(h0 t / 2) / h0``, or ``t/2`` at h0 = 0."""
    if h0 == 0.0:
        return 0.5 * t
    z = 0.5 * h0 * t
    # t/2 * tanh(z)/z stays accurate when h0 is tiny or subnormal
    return 0.5 * t * _tanh_ratio(z)


def step_to_time(h0: float, eps: float) -> float:
    """The time ``t`` with ``f_of_t(h0, t) == eps``."""
    if h0 == 0.0:
        return 2.0 * eps
    z = eps * h0
    if abs(z) >= 1.0:
        raise OutOfRange(f"|eps * h0| = {abs(z)!r} >= 1: no time reaches f = eps")
    return 2.0 * eps * _atanh_ratio(z)


def _tanh_ratio(z: float) -> float:
    """``tanh(z) / z``, with its series near 0."""
    if abs(z) < 1e-5:
        return 1.0 - z * z / 3.0
    return math.tanh(z) / z


def _atanh_ratio(z: float) -> float:
    """``atanh(z) / z``, with its series near 0."""
    if abs(z) < 1e-5:
        return 1.0 + z * z / 3.0
    return math.atanh(z) / z


def flow_time(h0: float, t: float) -> FlowTime:
    return FlowTime(t=t, h0=h0, f_value=f_of_t(h0, t))


def _critical_time(h0: float, vi: float) -> float | None:
    # 1 + v g(t) = 0 with g = (e^{h0 t} - 1) / h0, i.e. e^{h0 t} = 1 - h0 / v
    if vi == 0.0:
        return None
    if h0 == 0.0:
        return -1.0 / vi
    arg = -h0 / vi
    if arg <= -1.0:
        return None
    return math.log1p(arg) / h0


def _tail_sums(params: SystemParams, x: np.ndarray) -> np.ndarray:
    """``w_i = h0 - v_i = a_{i+1} x_{i+1} + ... + a_n x_n`` for ``i = 0..n``, summed directly."""
    w = np.zeros(params.n + 1)
    np.cumsum((params.a * x)[::-1], out=w[-2::-1])
    return w


def _advance(params: SystemParams, x0: np.ndarray, h0: float, growth: float, g: float):
    """Evaluate ``x0_i * growth / (d_{i-1} d_i)`` with ``d_i = 1 + v_i g``.

    ``growth = 1 + h0 g`` (``e^{h0 t}`` for the flow, ``r^m`` for iterates).
    When ``growth`` is far from 1 the factor ``d_i`` is evaluated as
    ``(w_i + v_i growth) / h0`` with the directly summed tails ``w_i``, which
    avoids the cancellation in ``1 + v_i g`` once ``growth`` is tiny or huge.
    Returns the new state and the vector ``d``.
    """
    v = cumulative_sums(params, x0).v
    if h0 != 0.0 and abs(growth - 1.0) > 0.5:
        d = (_tail_sums(params, x0) + v * growth) / h0
    else:
        d = 1.0 + v * g
    # v_0 = 0 and v_n = h0 make these exact; pinning them keeps n = 1 fixed exactly
    d[0] = 1.0
    d[-1] = growth
    return x0 * (growth / d[1:]) / d[:-1], d


def exact_flow(params: SystemParams, x0, t: float) -> np.ndarray:
    """Solution at time ``t`` through ``x0``.

    ``x_i(t) = x0_i (1 - f h0)(1 + f h0) / ((1 - f h0 + 2 f v_{i-1})(1 - f h0 + 2 f v_i))``
    with ``f = f_of_t(h0, t)``, evaluated in the equivalent form
    ``x0_i e^{h0 t} h0^2 / ((h0 + (e^{h0 t} - 1) v_{i-1})(h0 + (e^{h0 t} - 1) v_i))``.
    """
    x0 = as_state(params, x0)
    h0 = cumulative_sums(params, x0).h
    if _h_is_zero(h0, _h_scale(params, x0)):
        h0 = 0.0
    if h0 == 0.0:
        growth, g = 1.0, float(t)
    else:
        growth = math.exp(h0 * t)
        g = math.expm1(h0 * t) / h0
    x, d = _advance(params, x0, h0, growth, g)
    # d_i(t) is monotone in t and equals 1 at t = 0, so d_i <= 0 means a pole was crossed
    bad = np.flatnonzero(d <= 0.0)
    if bad.size:
        i = int(bad[0])
        vi = float(cumulative_sums(params, x0).v[i])
        raise BlowupError(i, _critical_time(h0, vi))
    return x


def exact_v_flow(h0: float, v0: float, t: float) -> float:
    """Solution of ``v' = v (h0 - v)`` with ``v(0) = v0``.

    Written as ``v0 e^{h0 t} / (1 + v0 (e^{h0 t} - 1) / h0)``, which equals
    ``1 / (1/h0 + C e^{-h0 t})`` with ``C = 1/v0 - 1/h0`` and tends to
    ``1 / (t + 1/v0)`` as ``h0 -> 0``.
    """
    if v0 == 0.0:
        return 0.0
    if h0 == 0.0:
        g = t
        growth = 1.0
    else:
        g = math.expm1(h0 * t) / h0
        growth = math.exp(h0 * t)
    den = 1.0 + v0 * g
    if den <= 0.0:
        raise BlowupError(None, _critical_time(h0, v0),
                          message=f"blowup: v({t!r}) passes through a pole")
    return v0 * growth / den


# -- Kahan maps ---------------------------------------------------------------


def kahan_denominators(params: SystemParams, x, eps: float) -> np.ndarray:
    """``1 - eps H + 2 eps v_i`` for ``i = 0..n``."""
    cs = cumulative_sums(params, x)
    return 1.0 - eps * cs.h + 2.0 * eps * cs.v


def kahan_step_closed(params: SystemParams, x, eps: float) -> np.ndarray:
    """Kahan map with step ``2 eps`` in closed form.

    ``x~_i = x_i (1 - eps H)(1 + eps H) / ((1 - eps H + 2 eps v_{i-1})(1 - eps H + 2 eps v_i))``
    """
    x = as_state(params, x)
    cs = cumulative_sums(params, x)
    h = cs.h
    den = 1.0 - eps * h + 2.0 * eps * cs.v
    zero = np.flatnonzero(den == 0.0)
    if zero.size:
        raise MapPoleError(int(zero[0]), f"Kahan map pole: 1 - eps H + 2 eps v_{int(zero[0])} = 0")
    # den_0 = 1 - eps H and den_n = 1 + eps H cancel the numerator factors
    den[-1] = 1.0 + eps * h
    return x * ((1.0 - eps * h) / den[:-1]) * ((1.0 + eps * h) / den[1:])


def kahan_v_step(params: SystemParams, x, eps: float) -> np.ndarray:
    """Cumulative sums after one Kahan step: ``v_j (1 + eps H) / (1 - eps H + 2 eps v_j)``."""
    cs = cumulative_sums(params, x)
    h = cs.h
    return cs.v * (1.0 + eps * h) / (1.0 - eps * h + 2.0 * eps * cs.v)


@dataclass(frozen=True, eq=False)
class QuadraticField:
    """``Q_i(x) = sum_jk q[i, j, k] x_j x_k`` with ``q`` symmetric in ``(j, k)``."""

    q: np.ndarray

    def __post_init__(self):
        q = np.array(self.q, dtype=float)
        if q.ndim != 3 or not (q.shape[0] == q.shape[1] == q.shape[2]):
            raise DimensionMismatch("coefficient tensor must have shape (n, n, n)")
        if not np.array_equal(q, q.transpose(0, 2, 1)):
            raise ValueError("coefficient tensor must be symmetric in its last two indices")
        q.setflags(write=False)
        object.__setattr__(self, "q", q)

    @property
    def n(self) -> int:
        return self.q.shape[0]

    @classmethod
    def zero(cls, n: int) -> "QuadraticField":
        return cls(np.zeros((n, n, n)))

    @classmethod
    def from_params(cls, params: SystemParams) -> "QuadraticField":
        """The Lotka-Volterra field ``x_i (A x)_i`` as a symmetric tensor."""
        A = interaction_matrix(params)
        n = params.n
        q = np.zeros((n, n, n))
        for i in range(n):
            q[i, i, :] += 0.5 * A[i, :]
            q[i, :, i] += 0.5 * A[i, :]
        return cls(q)

    def __call__(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return np.einsum("ijk,j,k->i", self.q, x, x)

    def polarization(self, x, y) -> np.ndarray:
        return np.einsum("ijk,j,k->i", self.q, np.asarray(x, float), np.asarray(y, float))

    def linear_part(self, x) -> np.ndarray:
        """Matrix ``L(x)`` with ``polarization(x, y) == L(x) @ y``."""
        return np.einsum("ijk,j->ik", self.q, np.asarray(x, dtype=float))


def kahan_step_generic(fld: QuadraticField, x, h: float) -> np.ndarray:
    """Solve ``x~ - x = h * Phi(x, x~)``, i.e. ``(I - h L(x)) x~ = x``."""
    x = np.asarray(x, dtype=float)
    if x.shape != (fld.n,):
        raise DimensionMismatch(f"state has shape {x.shape}, expected ({fld.n},)")
    M = np.eye(fld.n) - h * fld.linear_part(x)
    with warnings.catch_warnings():
        # an exactly singular pivot is reported below as SingularSystem
        warnings.simplefilter("ignore", scipy.linalg.LinAlgWarning)
        lu, piv = scipy.linalg.lu_factor(M, check_finite=True)
    norm = np.linalg.norm(M, np.inf)
    if np.min(np.abs(np.diag(lu))) <= PIVOT_TOL * norm:
        with np.errstate(divide="ignore"):
            cond = float(np.linalg.cond(M))
        raise SingularSystem(cond)
    return scipy.linalg.lu_solve((lu, piv), x)


def kahan_iterates_closed(params: SystemParams, x0, eps: float, m: int) -> np.ndarray:
    """The ``m``-th iterate of the closed Kahan map, without iterating.

    For ``h0 != 0`` with ``r = (1 + eps h0) / (1 - eps h0)``:
    ``x_i = x0_i r^m h0^2 / ((h0 + v_{i-1} (r^m - 1)) (h0 + v_i (r^m - 1)))``;
    for ``h0 = 0``: ``x_i = x0_i / ((1 + 2 m eps v_{i-1}) (1 + 2 m eps v_i))``.
    Both are evaluated as ``x0_i r^m / ((1 + v_{i-1} g)(1 + v_i g))`` with
    ``g = (r^m - 1) / h0`` computed without cancellation (see ``_advance``).
    """
    if m < 0 or int(m) != m:
        raise OutOfRange(f"iterate count must be a non-negative integer, got {m!r}")
    m = int(m)
    x0 = as_state(params, x0)
    h0, rm, g = _iterate_growth(params, x0, eps, m)
    x, d = _advance(params, x0, h0, rm, g)
    zero = np.flatnonzero(d == 0.0)
    if zero.size:
        raise MapPoleError(int(zero[0]), f"iterate {m} hits a pole at v_{int(zero[0])}")
    return x


def _iterate_growth(params, x0, eps, m):
    """``(h0, r^m, (r^m - 1) / h0)`` for the closed-form iterates."""
    h0 = cumulative_sums(params, x0).h
    if _h_is_zero(h0, _h_scale(params, x0)):
        return 0.0, 1.0, 2.0 * m * eps
    z = eps * h0
    if abs(z) == 1.0:
        raise OutOfRange("|eps * h0| = 1: the Kahan map collapses onto a pole")
    if abs(z) < 1.0:
        s = 2.0 * m * math.atanh(z)
        return h0, math.exp(s), math.expm1(s) / h0
    rm = ((1.0 + z) / (1.0 - z)) ** m
    return h0, rm, (rm - 1.0) / h0


def iterate_condition(params: SystemParams, x0, eps: float, m: int) -> float:
    """Condition number of the closed-form ``m``-th iterate.

    The largest ratio ``sum |terms| / |sum|`` over the factors ``1 + v_i g``.
    It is 1 far from poles and grows without bound as an iterate approaches
    a pole of the exact solution.
    """
    x0 = as_state(params, x0)
    h0, rm, g = _iterate_growth(params, x0, eps, m)
    v = cumulative_sums(params, x0).v
    if h0 != 0.0 and abs(rm - 1.0) > 0.5:
        w = _tail_sums(params, x0)
        num, den = np.abs(w) + np.abs(v) * abs(rm), np.abs(w + v * rm)
    else:
        num, den = 1.0 + np.abs(v * g), np.abs(1.0 + v * g)
    with np.errstate(divide="ignore"):
        return float(np.max(num / den))


# -- RK4 ----------------------------------------------------------------------


def _field_fn(fld) -> Callable[[np.ndarray], np.ndarray]:
    if isinstance(fld, SystemParams):
        return lambda x: vector_field(fld, x)
    return fld


def rk4_step(fld, x, h: float) -> np.ndarray:
    """Classical fourth-order Runge-Kutta step for a field or a system."""
    f = _field_fn(fld)
    x = np.asarray(x, dtype=float)
    k1 = f(x)
    k2 = f(x + 0.5 * h * k1)
    k3 = f(x + 0.5 * h * k2)
    k4 = f(x + h * k3)
    return x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


# -- trajectories -------------------------------------------------------------

STEPPERS = ("kahan", "kahan-generic", "rk4", "flow", "closed-iterates")


@dataclass
class TrajectoryRecord:
    steps: np.ndarray
    times: np.ndarray
    states: np.ndarray
    names: list[str]
    values: np.ndarray
    drift: dict[str, float]
    event: dict | None = None
    stepper: str = ""
    step: float = 0.0

    @property
    def complete(self) -> bool:
        return self.event is None


def _integral_values(integrals, x) -> list[float]:
    out = []
    for d in integrals:
        try:
            out.append(float(d(x)))
        except DomainEvent:
            out.append(float("nan"))
    return out


def relative_drift(values: np.ndarray) -> np.ndarray:
    """Per-column ``max_k |I_k - I_0| / |I_0|`` (absolute when ``I_0 == 0``)."""
    values = np.asarray(values, dtype=float)
    if values.shape[0] == 0:
        return np.zeros(values.shape[1] if values.ndim == 2 else 0)
    base = values[0]
    denom = np.where(base != 0.0, np.abs(base), 1.0)
    with np.errstate(invalid="ignore"):
        dev = np.abs(values - base) / denom
    return np.max(dev, axis=0)


def _time_unit(stepper: str, h0: float, step: float) -> float:
    if stepper in ("flow", "rk4"):
        return step
    eps = step / 2.0 if stepper == "kahan-generic" else step
    try:
        return step_to_time(h0, eps)
    except OutOfRange:
        return float("nan")


def trajectory(stepper: str, params: SystemParams, x0, step: float, count: int,
               integrals: Sequence = ()) -> TrajectoryRecord:
    """Iterate ``stepper`` ``count`` times from ``x0`` and record integrals.

    ``step`` is ``eps`` for ``kahan`` and ``closed-iterates``, ``h`` for
    ``kahan-generic`` and ``rk4`` and the time increment for ``flow``. A pole
    or blowup stops the run; the partial record carries the event.
    """
    if stepper not in STEPPERS:
        raise ValueError(f"unknown stepper {stepper!r}")
    if count < 0:
        raise OutOfRange("step count must be non-negative")
    x0 = as_state(params, x0)
    integrals = list(integrals)
    h0 = cumulative_sums(params, x0).h
    if _h_is_zero(h0, _h_scale(params, x0)):
        h0 = 0.0
    fld = QuadraticField.from_params(params) if stepper == "kahan-generic" else None

    def advance(x, k):
        if stepper == "kahan":
            return kahan_step_closed(params, x, step)
        if stepper == "kahan-generic":
            return kahan_step_generic(fld, x, step)
        if stepper == "rk4":
            return rk4_step(params, x, step)
        if stepper == "flow":
            # from x0 directly, so a blowup reports its absolute critical time
            return exact_flow(params, x0, k * step)
        return kahan_iterates_closed(params, x0, step, k)

    states = [x0.copy()]
    values = [_integral_values(integrals, x0)]
    event = None
    x = x0
    for k in range(1, count + 1):
        try:
            x = advance(x, k)
        except DomainEvent as exc:
            event = {"step": k, "type": type(exc).__name__, "message": str(exc),
                     "index": getattr(exc, "index", None)}
            if isinstance(exc, BlowupError):
                event["critical_time"] = exc.critical_time
            break
        states.append(np.array(x, dtype=float))
        values.append(_integral_values(integrals, x))
    states = np.array(states)
    values = np.array(values, dtype=float).reshape(len(states), len(integrals))
    steps = np.arange(len(states))
    times = steps * _time_unit(stepper, h0, step)
    drift = dict(zip([d.name for d in integrals], relative_drift(values).tolist()))
    return TrajectoryRecord(steps=steps, times=times, states=states,
                            names=[d.name for d in integrals], values=values,
                            drift=drift, event=event, stepper=stepper, step=step)
