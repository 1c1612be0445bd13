import itertools

import numpy as np
import pytest
from hypothesis import strategies as st

from lvkahan.harness.config import random_states

VALUES = (1.0, 2.0, -3.0)


def patterns(n):
    """Every zero/nonzero pattern of length ``n`` except all-zero.

    Nonzero entries cycle through 1, 2, -3 in index order.
    """
    for mask in itertools.product((0, 1), repeat=n):
        if any(mask):
            yield tuple(VALUES[i % 3] if m else 0.0 for i, m in enumerate(mask))


def states(n, seed, count=20):
    return random_states(n, seed, count, 0.5, 2.0)


def rel(got, ref):
    got = np.asarray(got, dtype=float)
    ref = np.asarray(ref, dtype=float)
    return float(np.max(np.abs(got - ref) / np.maximum(np.abs(ref), 1e-300)))


def _central(f, x, i, h):
    xp, xm = x.copy(), x.copy()
    xp[i] += h
    xm[i] -= h
    return (f(xp) - f(xm)) / (2 * h)


def fd_grad(f, x, step=None):
    """Central differences, Richardson-extrapolated to fourth order."""
    x = np.asarray(x, dtype=float)
    g = np.zeros_like(x)
    for i in range(x.size):
        h = (step or 1e-5) * max(1.0, abs(x[i]))
        g[i] = (4 * _central(f, x, i, h / 2) - _central(f, x, i, h)) / 3
    return g


coef = st.sampled_from((0.0, 1.0, 2.0, -3.0, 0.5))
box = st.floats(0.5, 2.0)


@st.composite
def system_and_state(draw, min_n=1, max_n=6):
    n = draw(st.integers(min_n, max_n))
    a = draw(st.lists(coef, min_size=n, max_size=n).filter(any))
    x = draw(st.lists(box, min_size=n, max_size=n))
    return tuple(a), np.array(x)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
