"""Quadratic (diagonal) Poisson brackets and the checks built on them.

The default bracket is ``{x_i, x_j} = x_i x_j`` for ``i < j``. A diagonal
bracket generalises it to ``{x_i, x_j} = b_ij x_i x_j`` with ``b`` skew.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .core import SystemParams, as_state, vector_field
from .errors import (
    DomainEvent,
    EvenDimension,
    IllegalOverride,
    IndexOutOfRange,
    NumericalJacobianFailure,
    PoleError,
)
from .integrals import Integral, _alternating, _monomial_grad

log = logging.getLogger(__name__)

FD_STEP = np.finfo(float).eps ** (1.0 / 3.0)


def default_coefficients(n: int) -> np.ndarray:
    """``b_ij = sign(j - i)``."""
    idx = np.arange(n)
    return np.sign(idx[None, :] - idx[:, None]).astype(float)


@dataclass(frozen=True, eq=False)
class DiagonalBracket:
    b: np.ndarray

    def __post_init__(self):
        b = np.array(self.b, dtype=float)
        if b.ndim != 2 or b.shape[0] != b.shape[1]:
            raise ValueError("bracket coefficients must form a square matrix")
        if not np.array_equal(b, -b.T):
            raise ValueError("bracket coefficients must be skew-symmetric")
        b.setflags(write=False)
        object.__setattr__(self, "b", b)

    @classmethod
    def default(cls, n: int) -> "DiagonalBracket":
        return cls(default_coefficients(n))

    def with_override(self, i: int, j: int, value: float) -> "DiagonalBracket":
        """Copy with ``b_ij = value`` and ``b_ji = -value`` (1-based indices)."""
        b = np.array(self.b)
        b[i - 1, j - 1] = value
        b[j - 1, i - 1] = -value
        return DiagonalBracket(b)

    @property
    def n(self) -> int:
        return self.b.shape[0]

    def matrix(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return self.b * np.outer(x, x)


def structure_matrix(x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    return default_coefficients(x.size) * np.outer(x, x)


# -- brackets ----------------------------------------------------------------


def _grad(f, x: np.ndarray) -> np.ndarray:
    if isinstance(f, Integral):
        return f.gradient(x)
    if isinstance(f, (int, np.integer)):
        if not 1 <= f <= x.size:
            raise IndexOutOfRange(f"coordinate index {f} outside [1, {x.size}]")
        g = np.zeros(x.size)
        g[f - 1] = 1.0
        return g
    g = np.asarray(f, dtype=float)
    if g.shape != x.shape:
        raise ValueError("gradient has the wrong shape")
    return g


def bracket(f, g, x, b: DiagonalBracket | None = None) -> float:
    """``{f, g}(x) = grad f . P(x) grad g``.

    ``f`` and ``g`` are :class:`Integral` descriptors, 1-based coordinate
    indices, or explicit gradient vectors.
    """
    x = np.asarray(x, dtype=float)
    P = structure_matrix(x) if b is None else b.matrix(x)
    df, dg = _grad(f, x), _grad(g, x)
    # sum over i < j of P_ij (df_i dg_j - df_j dg_i): exactly antisymmetric
    return float(np.sum(np.triu(P * (np.outer(df, dg) - np.outer(dg, df)), 1)))


def _scaled_bracket(df, dg, P):
    val = df @ P @ dg
    scale = np.abs(df) @ np.abs(P) @ np.abs(dg)
    return abs(val) / (1.0 + scale), float(val)


@dataclass
class InvolutionReport:
    names: list[str]
    residuals: np.ndarray  # pairwise worst scaled residual, symmetric
    worst: float
    points: int
    skipped: list[int] = field(default_factory=list)
    tol: float = 1e-9

    @property
    def passed(self) -> bool:
        return bool(self.worst <= self.tol)

    def worst_pair(self) -> tuple[str, str] | None:
        if len(self.names) < 2:
            return None
        i, j = np.unravel_index(np.argmax(self.residuals), self.residuals.shape)
        return self.names[i], self.names[j]


def check_involution(integrals: Sequence[Integral], points, tol: float = 1e-9) -> InvolutionReport:
    """Evaluate every pairwise bracket at every point.

    A pair passes when ``|{f,g}| <= tol * (1 + |grad f|.|P|.|grad g|)``,
    with absolute values taken elementwise. Points on a pole are skipped and
    listed in ``skipped``.
    """
    integrals = list(integrals)
    m = len(integrals)
    res = np.zeros((m, m))
    skipped = []
    used = 0
    for p_idx, x in enumerate(points):
        x = np.asarray(x, dtype=float)
        try:
            grads = [d.gradient(x) for d in integrals]
        except PoleError as exc:
            log.warning("skipping point %d: %s", p_idx, exc)
            skipped.append(p_idx)
            continue
        used += 1
        P = structure_matrix(x)
        for i in range(m):
            for j in range(i + 1, m):
                r, _ = _scaled_bracket(grads[i], grads[j], P)
                if r > res[i, j]:
                    res[i, j] = res[j, i] = r
    worst = float(res.max()) if m > 1 else 0.0
    return InvolutionReport(
        names=[d.name for d in integrals], residuals=res, worst=worst,
        points=used, skipped=skipped, tol=tol,
    )


def casimir_residual(x, f: Integral | None = None) -> float:
    """``max_j |{f, x_j}|`` scaled by ``1 + sum_i |df_i| |P_ij|``; ``f`` defaults to C."""
    x = np.asarray(x, dtype=float)
    if f is None:
        if x.size % 2 == 0:
            raise EvenDimension("C is only defined for odd n")
        df = _monomial_grad(x, _alternating(x.size, 1, 1))
    else:
        df = f.gradient(x)
    P = structure_matrix(x)
    vals = df @ P
    scale = np.abs(df) @ np.abs(P)
    return float(np.max(np.abs(vals) / (1.0 + scale)))


def check_casimir(x, tol: float = 1e-12, f: Integral | None = None) -> bool:
    return casimir_residual(x, f) <= tol


# -- Poisson maps ------------------------------------------------------------


def fd_jacobian(fn: Callable[[np.ndarray], np.ndarray], x, step: float = FD_STEP) -> np.ndarray:
    """Central-difference Jacobian, step ``step * max(1, |x_i|)`` per column."""
    x = np.asarray(x, dtype=float)
    cols = []
    for i in range(x.size):
        h = step * max(1.0, abs(x[i]))
        xp = x.copy()
        xm = x.copy()
        xp[i] += h
        xm[i] -= h
        try:
            fp = np.asarray(fn(xp), dtype=float)
            fm = np.asarray(fn(xm), dtype=float)
        except DomainEvent as exc:
            raise NumericalJacobianFailure(f"map hits a pole within the FD stencil: {exc}") from exc
        if not (np.all(np.isfinite(fp)) and np.all(np.isfinite(fm))):
            raise NumericalJacobianFailure("non-finite map values within the FD stencil")
        cols.append((fp - fm) / ((x[i] + h) - (x[i] - h)))
    return np.column_stack(cols)


def poisson_map_residual(fn, x, b: DiagonalBracket | None = None) -> float:
    """Worst elementwise scaled residual of ``M P(x) M^T - P(fn(x))``."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(fn(x), dtype=float)
    M = fd_jacobian(fn, x)
    Px = structure_matrix(x) if b is None else b.matrix(x)
    Py = structure_matrix(y) if b is None else b.matrix(y)
    diff = M @ Px @ M.T - Py
    scale = np.abs(M) @ np.abs(Px) @ np.abs(M).T
    return float(np.max(np.abs(diff) / (1.0 + scale)))


def poisson_map_check(fn, x, tol: float = 1e-6, b: DiagonalBracket | None = None) -> bool:
    return poisson_map_residual(fn, x, b) <= tol


# -- diagonal brackets -------------------------------------------------------


def hamiltonian_vector_field(params: SystemParams, b: DiagonalBracket, x) -> np.ndarray:
    """``{x_i, H}`` under the diagonal bracket ``b``."""
    x = as_state(params, x)
    return x * (b.b @ (params.a * x))


def diagonal_vector_field_invariance(params: SystemParams, b: DiagonalBracket, x,
                                     tol: float = 1e-12) -> bool:
    """True when the Hamiltonian vector field of H under ``b`` is the usual one.

    Raises :class:`IllegalOverride` if ``b`` departs from the default signs at
    a pair where either coefficient is nonzero.
    """
    if b.n != params.n:
        raise IndexOutOfRange("bracket dimension does not match the system")
    changed = np.argwhere(b.b != default_coefficients(params.n))
    for i, j in changed:
        if params.a[i] != 0 or params.a[j] != 0:
            raise IllegalOverride(
                f"b_{i + 1}{j + 1} overridden but a_{i + 1}, a_{j + 1} are not both zero")
    ref = vector_field(params, x)
    got = hamiltonian_vector_field(params, b, x)
    return bool(np.max(np.abs(got - ref)) <= tol * (1.0 + np.max(np.abs(ref))))


def jacobiator(b: DiagonalBracket, x, i: int, j: int, k: int) -> float:
    """``{{x_i,x_j},x_k} + {{x_j,x_k},x_i} + {{x_k,x_i},x_j}`` under ``b``.

    Uses the bivector form ``sum_l (P_lk d_l P_ij + P_li d_l P_jk + P_lj d_l P_ki)``
    with the exact derivative ``d_l P_ij = b_ij (delta_li x_j + delta_lj x_i)``.
    """
    x = np.asarray(x, dtype=float)
    n = b.n
    for idx in (i, j, k):
        if not 1 <= idx <= n:
            raise IndexOutOfRange(f"index {idx} outside [1, {n}]")
    if len({i, j, k}) != 3:
        raise IndexOutOfRange("jacobiator needs three distinct indices")
    P = b.matrix(x)
    B = b.b

    def dP(p, q):
        g = np.zeros(n)
        g[p] += B[p, q] * x[q]
        g[q] += B[p, q] * x[p]
        return g

    i, j, k = i - 1, j - 1, k - 1
    return float(dP(i, j) @ P[:, k] + dP(j, k) @ P[:, i] + dP(k, i) @ P[:, j])
