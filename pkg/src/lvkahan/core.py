"""The generalized Lotka-Volterra system with linear Hamiltonian ``H = a.x``.

The system is

    dx_i/dt = x_i * sum_j A_ij x_j,   A_ij = a_j (j > i), -a_j (j < i), 0 (j = i)

or equivalently ``dx_i/dt = x_i (H - v_i - v_{i-1})`` with the cumulative
sums ``v_i = a_1 x_1 + ... + a_i x_i`` and ``v_0 = 0``.

Indices in docstrings and in every public argument are 1-based. Arrays are
0-based, except the cumulative-sum vector ``v`` which has length ``n + 1``
so that ``v[i]`` is ``v_i``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import DimensionMismatch, EmptyDimension, ZeroCoefficients, ZeroScale


def _frozen(arr) -> np.ndarray:
    out = np.array(arr, dtype=float)
    out.setflags(write=False)
    return out


@dataclass(frozen=True, eq=False)
class SystemParams:
    """Validated parameters of one system.

    ``ell`` is the number of leading zero coefficients, ``lam = ell // 2``,
    and the index partition is ``A = {1..ell}``, ``B = {i : a_i != 0}``,
    ``C = {i > ell + 1 : a_i = 0}``.
    """

    a: np.ndarray
    n: int
    ell: int
    lam: int
    A: tuple[int, ...]
    B: tuple[int, ...]
    C: tuple[int, ...]

    def __repr__(self):
        return f"SystemParams(a={self.a.tolist()})"

    def __eq__(self, other):
        if not isinstance(other, SystemParams):
            return NotImplemented
        return np.array_equal(self.a, other.a)

    def __hash__(self):
        return hash(tuple(self.a.tolist()))


@dataclass(frozen=True, eq=False)
class CumulativeSums:
    v: np.ndarray
    h: float


def build_system(a) -> SystemParams:
    a = _frozen(np.atleast_1d(np.asarray(a, dtype=float)))
    if a.ndim != 1 or a.size == 0:
        raise EmptyDimension("coefficient vector must be non-empty and one-dimensional")
    nonzero = np.flatnonzero(a)
    if nonzero.size == 0:
        raise ZeroCoefficients("the all-zero coefficient vector is excluded")
    n = a.size
    ell = int(nonzero[0])
    A = tuple(range(1, ell + 1))
    B = tuple(int(i) + 1 for i in nonzero)
    C = tuple(i for i in range(ell + 2, n + 1) if a[i - 1] == 0)
    return SystemParams(a=a, n=n, ell=ell, lam=ell // 2, A=A, B=B, C=C)


def as_state(params: SystemParams, x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.shape != (params.n,):
        raise DimensionMismatch(f"state has shape {x.shape}, expected ({params.n},)")
    return x


def interaction_matrix(params: SystemParams) -> np.ndarray:
    n = params.n
    upper = np.triu(np.ones((n, n)), k=1) - np.tril(np.ones((n, n)), k=-1)
    return upper * params.a[np.newaxis, :]


def cumulative_sums(params: SystemParams, x) -> CumulativeSums:
    x = as_state(params, x)
    v = np.zeros(params.n + 1)
    # sequential accumulation: adding an exact 0.0 keeps v_k == v_{k-1} when a_k == 0
    np.cumsum(params.a * x, out=v[1:])
    return CumulativeSums(v=v, h=float(v[-1]))


def hamiltonian(params: SystemParams, x) -> float:
    return cumulative_sums(params, x).h


def vector_field(params: SystemParams, x) -> np.ndarray:
    """Velocity ``x_i (H - v_i - v_{i-1})``."""
    x = as_state(params, x)
    cs = cumulative_sums(params, x)
    v = cs.v
    return x * (cs.h - v[1:] - v[:-1])


def vector_field_matrix(params: SystemParams, x) -> np.ndarray:
    """Velocity from the matrix form ``x_i (A x)_i``; kept as a cross-check."""
    x = as_state(params, x)
    return x * (interaction_matrix(params) @ x)


def rescale(params: SystemParams, c) -> tuple[SystemParams, Callable[[np.ndarray], np.ndarray]]:
    """Rescale coordinates ``y = x / c``; the new system has coefficients ``a * c``.

    Returns the new parameters and the coordinate map ``x -> x / c``.
    """
    c = np.asarray(c, dtype=float)
    if c.shape != (params.n,):
        raise DimensionMismatch(f"scale vector has shape {c.shape}, expected ({params.n},)")
    zero = np.flatnonzero(c == 0)
    if zero.size:
        raise ZeroScale(f"scale factor c_{int(zero[0]) + 1} is zero")
    c = _frozen(c)
    new = build_system(params.a * c)

    def to_new(x):
        return np.asarray(x, dtype=float) / c

    return new, to_new
