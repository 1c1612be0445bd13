"""First integrals, their analytic gradients, and functional independence.

Every integral is an :class:`Integral` descriptor: a tag (``kind``), its
1-based indices and the system it belongs to. Descriptors are callable and
expose ``gradient``. The families are

* ``H``            the Hamiltonian ``a.x``
* ``J(k)``         ``x_1 x_3 ... x_{2k-1} / (x_2 x_4 ... x_{2k})``
* ``F(k)``         ``v_{2k} I_k`` (n even) or ``v_{2k-1} I_k`` (n odd), where
                   ``I_k`` is the alternating monomial in the trailing coordinates
* ``C``            ``x_1 x_3 ... x_n / (x_2 ... x_{n-1})`` (n odd, a Casimir)
* ``K(i)``         for ``i`` in ``A`` or ``C`` of the index partition
* ``G(i, j)``      ``v_i (H - v_j) / (v_j (H - v_i))``
* ``x(i)``, ``v(i)``, ``ratio(i, j)``, ``product(i, j)``  simple helpers

Monomials are evaluated as a running product in index order. For the
alternating families this keeps intermediate values near the size of the
final result, so long trajectories with exponentially growing coordinates do
not overflow.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .core import SystemParams, as_state, cumulative_sums
from .errors import EmptySet, EvenDimension, IndexOutOfRange, NotApplicable, PoleError

KINDS = ("H", "J", "F", "C", "K", "G", "x", "v", "ratio", "product")


def _apply_power(val: float, xi: float, e: int) -> float:
    # repeated multiply/divide overflows to inf instead of raising like ``**``
    for _ in range(abs(e)):
        val = val * xi if e > 0 else val / xi
    return val


def _monomial(x: np.ndarray, exps: np.ndarray) -> float:
    for i in np.flatnonzero(exps < 0):
        if x[i] == 0.0:
            raise PoleError(int(i) + 1)
    val = 1.0
    for i in np.flatnonzero(exps):
        val = _apply_power(val, float(x[i]), int(exps[i]))
    return val


def _monomial_grad(x: np.ndarray, exps: np.ndarray) -> np.ndarray:
    for i in np.flatnonzero(exps < 0):
        if x[i] == 0.0:
            raise PoleError(int(i) + 1)
    support = np.flatnonzero(exps)
    grad = np.zeros(x.size)
    for i in support:
        e = int(exps[i])
        val = _apply_power(float(e), float(x[i]), e - 1)
        for j in support:
            if j != i:
                val = _apply_power(val, float(x[j]), int(exps[j]))
        grad[i] = val
    return grad


def _alternating(n: int, start: int, first_sign: int) -> np.ndarray:
    """Exponents +-1 alternating over 1-based indices start..n."""
    e = np.zeros(n, dtype=int)
    for i in range(start, n + 1):
        e[i - 1] = first_sign if (i - start) % 2 == 0 else -first_sign
    return e


def _check_range(name, k, lo, hi):
    if not (lo <= k <= hi):
        raise IndexOutOfRange(f"{name} index {k} outside [{lo}, {hi}]")


@dataclass(frozen=True, eq=False)
class Integral:
    """A tagged first integral (or coordinate function) of one system."""

    kind: str
    index: tuple[int, ...]
    params: SystemParams = field(repr=False)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown integral kind {self.kind!r}")
        p = self.params
        n = p.n
        k = self.index
        if self.kind == "J":
            _check_range("J", k[0], 1, n // 2)
        elif self.kind == "F":
            _check_range("F", k[0], 1, (n + 1) // 2)
        elif self.kind == "C":
            if n % 2 == 0:
                raise EvenDimension("C is only defined for odd n")
        elif self.kind == "K":
            if len(p.B) < 2:
                raise NotApplicable("K_i requires at least two nonzero coefficients")
            if k[0] not in p.A and k[0] not in p.C:
                raise NotApplicable(f"K_{k[0]} requires index in A or C")
        elif self.kind == "G":
            _check_range("G", k[0], 1, n)
            _check_range("G", k[1], k[0], n)
        elif self.kind in ("x", "v"):
            _check_range(self.kind, k[0], 1, n)
        elif self.kind in ("ratio", "product"):
            _check_range(self.kind, k[0], 1, n)
            _check_range(self.kind, k[1], 1, n)

    def __eq__(self, other):
        if not isinstance(other, Integral):
            return NotImplemented
        return (self.kind, self.index, self.params) == (other.kind, other.index, other.params)

    def __hash__(self):
        return hash((self.kind, self.index, self.params))

    @property
    def name(self) -> str:
        k = self.index
        if self.kind in ("H", "C"):
            return self.kind
        if self.kind in ("J", "F", "K"):
            return f"{self.kind}{k[0]}"
        if self.kind == "G":
            return f"G{k[0]}_{k[1]}"
        if self.kind == "x":
            return f"x{k[0]}"
        if self.kind == "v":
            return f"v{k[0]}"
        if self.kind == "ratio":
            return f"x{k[0]}/x{k[1]}"
        return f"x{k[0]}*x{k[1]}"

    # -- structure ---------------------------------------------------------

    def _exponents(self) -> np.ndarray | None:
        """Exponent vector of the monomial factor, or None for linear kinds."""
        n = self.params.n
        k = self.index
        if self.kind == "J":
            e = _alternating(n, 1, 1)
            e[2 * k[0]:] = 0
            return e
        if self.kind == "C":
            return _alternating(n, 1, 1)
        if self.kind == "F":
            if n % 2 == 0:
                return _alternating(n, 2 * k[0] + 1, -1)
            return _alternating(n, 2 * k[0], -1)
        if self.kind == "x":
            e = np.zeros(n, dtype=int)
            e[k[0] - 1] = 1
            return e
        if self.kind in ("ratio", "product"):
            e = np.zeros(n, dtype=int)
            e[k[0] - 1] += 1
            e[k[1] - 1] += -1 if self.kind == "ratio" else 1
            return e
        if self.kind == "K":
            l1 = self.params.ell + 1
            e = np.zeros(n, dtype=int)
            e[l1 - 1] = -1
            e[k[0] - 1] = 1 if k[0] in self.params.A else -1
            return e
        return None

    def _v_index(self) -> int:
        """Index of the cumulative sum multiplying an ``F`` monomial."""
        k = self.index[0]
        return 2 * k if self.params.n % 2 == 0 else 2 * k - 1

    def _v_grad(self, j: int) -> np.ndarray:
        g = np.zeros(self.params.n)
        g[:j] = self.params.a[:j]
        return g

    @property
    def poles(self) -> tuple[int, ...]:
        """1-based coordinates whose vanishing makes the integral singular.

        ``G`` is singular where ``v_i``, ``v_j``, ``H - v_i`` or ``H - v_j``
        vanish; those are not coordinate hyperplanes and are not listed.
        """
        e = self._exponents()
        if e is None:
            return ()
        return tuple(int(i) + 1 for i in np.flatnonzero(e < 0))

    # -- evaluation --------------------------------------------------------

    def __call__(self, x) -> float:
        p = self.params
        x = as_state(p, x)
        kind = self.kind
        if kind == "H":
            return cumulative_sums(p, x).h
        if kind == "v":
            return float(cumulative_sums(p, x).v[self.index[0]])
        if kind == "G":
            return _eval_G(p, x, *self.index)
        e = self._exponents()
        mono = _monomial(x, e)
        if kind == "F":
            return float(cumulative_sums(p, x).v[self._v_index()]) * mono
        if kind == "K":
            i = self.index[0]
            l1 = p.ell + 1
            cs = cumulative_sums(p, x)
            u = float(_tails(p, x)[l1])
            if i in p.A:
                return u * mono
            return u * float(cs.v[i]) ** 2 * mono
        return mono

    def gradient(self, x) -> np.ndarray:
        p = self.params
        x = as_state(p, x)
        kind = self.kind
        if kind == "H":
            return np.array(p.a, dtype=float)
        if kind == "v":
            return self._v_grad(self.index[0])
        if kind == "G":
            return _grad_G(p, x, *self.index)
        e = self._exponents()
        mono = _monomial(x, e)
        dmono = _monomial_grad(x, e)
        if kind == "F":
            j = self._v_index()
            vj = float(cumulative_sums(p, x).v[j])
            return mono * self._v_grad(j) + vj * dmono
        if kind == "K":
            i = self.index[0]
            l1 = p.ell + 1
            cs = cumulative_sums(p, x)
            du = np.array(p.a, dtype=float)
            du[l1 - 1] = 0.0
            u = float(_tails(p, x)[l1])
            if i in p.A:
                return mono * du + u * dmono
            vi = float(cs.v[i])
            dvi = self._v_grad(i)
            return vi * vi * (mono * du + u * dmono) + 2.0 * u * vi * mono * dvi
        return dmono


# -- G: cross-ratio integrals of the B-subsystem ---------------------------


def _tails(p, x) -> np.ndarray:
    """``w[i] = H - v_i`` summed directly over ``k > i`` (no cancellation)."""
    w = np.zeros(p.n + 1)
    w[:-1] = np.cumsum((p.a * x)[::-1])[::-1]
    return w


def _G_parts(p, x, i, j):
    v = cumulative_sums(p, x).v
    w = _tails(p, x)
    for idx, val in ((i, v[i]), (j, v[j])):
        if val == 0.0:
            raise PoleError(idx, f"pole: v_{idx} vanishes")
    for idx, val in ((i, w[i]), (j, w[j])):
        if val == 0.0:
            raise PoleError(idx, f"pole: H - v_{idx} vanishes")
    return v, w


def _eval_G(p, x, i, j):
    v, w = _G_parts(p, x, i, j)
    return float(v[i] * w[j] / (v[j] * w[i]))


def _grad_G(p, x, i, j):
    v, w = _G_parts(p, x, i, j)
    a = p.a
    dvi = np.zeros(p.n)
    dvi[:i] = a[:i]
    dvj = np.zeros(p.n)
    dvj[:j] = a[:j]
    # logarithmic derivative of v_i w_j / (v_j w_i)
    dlog = dvi / v[i] + (a - dvj) / w[j] - dvj / v[j] - (a - dvi) / w[i]
    return float(v[i] * w[j] / (v[j] * w[i])) * dlog


# -- functional API ----------------------------------------------------------


def eval_J(x, k: int) -> float:
    x = np.asarray(x, dtype=float)
    n = x.size
    _check_range("J", k, 1, n // 2)
    e = _alternating(n, 1, 1)
    e[2 * k:] = 0
    return _monomial(x, e)


def eval_F(params: SystemParams, x, k: int) -> float:
    return Integral("F", (k,), params)(x)


def eval_C(x) -> float:
    x = np.asarray(x, dtype=float)
    if x.size % 2 == 0:
        raise EvenDimension("C is only defined for odd n")
    return _monomial(x, _alternating(x.size, 1, 1))


def eval_K(params: SystemParams, x, i: int) -> float:
    return Integral("K", (i,), params)(x)


def eval_G(params: SystemParams, x, i: int, j: int) -> float:
    return Integral("G", (i, j), params)(x)


def gradient(d: Integral, x) -> np.ndarray:
    return d.gradient(x)


def hamiltonian_integral(params: SystemParams) -> Integral:
    return Integral("H", (), params)


def liouville_set(params: SystemParams) -> list[Integral]:
    """Integrals in involution: ``n // 2`` (even n) or ``(n + 1) // 2`` (odd n).

    Even n: ``J_1..J_lam, H, F_{lam+1}..F_{n/2-1}``.
    Odd n:  ``J_1..J_lam, H, F_{lam+2}..F_{(n-1)/2}, C``.

    When n is odd and only ``a_n`` is nonzero, ``C = J_lam * H / a_n`` is
    not independent of the rest and is left out; the list then already has
    ``(n + 1) // 2`` members.
    """
    n, lam = params.n, params.lam
    out = [Integral("J", (k,), params) for k in range(1, lam + 1)]
    out.append(Integral("H", (), params))
    if n % 2 == 0:
        out += [Integral("F", (k,), params) for k in range(lam + 1, n // 2)]
    else:
        out += [Integral("F", (k,), params) for k in range(lam + 2, (n - 1) // 2 + 1)]
        if params.ell != n - 1:
            out.append(Integral("C", (), params))
    return out


def superintegrable_set(params: SystemParams) -> list[Integral]:
    """``n - 1`` functionally independent first integrals of the flow."""
    n, ell = params.n, params.ell
    if n == 1:
        return []
    H = Integral("H", (), params)
    if len(params.B) == 1:
        if ell == 0:
            return [H] + [Integral("ratio", (i, 2), params) for i in range(3, n + 1)]
        return (
            [H]
            + [Integral("ratio", (i, 1), params) for i in range(2, ell + 1)]
            + [Integral("product", (1, i), params) for i in range(ell + 2, n + 1)]
        )
    B = params.B
    # v_{b_m} = H, so only b_1..b_{m-1} carry independent cumulative sums
    Gs = [Integral("G", (B[k], B[k + 1]), params) for k in range(len(B) - 2)]
    Ks = [Integral("K", (i,), params) for i in sorted(params.A + params.C)]
    return [H] + Gs + Ks


@dataclass(frozen=True, eq=False)
class IndependenceReport:
    point: np.ndarray
    jacobian: np.ndarray
    singular_values: np.ndarray
    rank: int
    tol: float


def independence_rank(integrals, x, tol: float = 1e-8) -> IndependenceReport:
    """Numerical rank of the stacked gradients at ``x``.

    Rows are normalised to unit length before the SVD. This does not change
    the rank and stops one steep integral near its pole from masking the
    others under the relative threshold ``sigma > tol * sigma_max``.
    """
    integrals = list(integrals)
    if not integrals:
        raise EmptySet("cannot assess independence of an empty set")
    x = np.asarray(x, dtype=float)
    jac = np.array([d.gradient(x) for d in integrals])
    norms = np.linalg.norm(jac, axis=1)
    scaled = jac / np.where(norms > 0, norms, 1.0)[:, None]
    sv = np.linalg.svd(scaled, compute_uv=False)
    rank = int(np.sum(sv > tol * sv[0])) if sv.size and sv[0] > 0 else 0
    return IndependenceReport(point=x, jacobian=jac, singular_values=sv, rank=rank, tol=tol)
