"""Hot numeric kernels: numba-jitted loops with pure-numpy fallbacks.

The jitted path is the default. Set MQLAB_NO_NUMBA=1 (before import) to force
the numpy implementations; `benchmarks/bench_kernels.py` times both. Each
kernel exists twice: `<name>_numpy` (vectorized) and `<name>_jit` (explicit
loops, compiled when numba is active). The public unsuffixed name is bound to
whichever path is selected.

The loop kernels fix the summation order of every inner product, so replays
that feed identical inputs through the same kernel are bit-stable. That is
what the protocol-replay machinery in `game` relies on.
"""

import math
import os

import numpy as np

USE_NUMBA = os.environ.get("MQLAB_NO_NUMBA", "") not in ("1", "true", "yes")
if USE_NUMBA:
    try:
        from numba import njit
    except ImportError:  # pragma: no cover - numba is a declared dependency
        USE_NUMBA = False

if not USE_NUMBA:
    def njit(*args, **kwargs):
        if args and callable(args[0]):
            return args[0]
        return lambda f: f


# ---------------------------------------------------------------------------
# signed row argmax: the projection half of the objective


def row_argmax_numpy(a_mat, x):
    """Smallest row index attaining max |<a_j, x>|, with that |dot| and its sign.

    Returns (j0, absdot, sign) with j0 0-based; sign is +1.0 when the dot is
    exactly zero. (-1, -inf, 1.0) for an empty matrix.
    """
    if a_mat.shape[0] == 0:
        return -1, -math.inf, 1.0
    dots = a_mat @ x
    absd = np.abs(dots)
    j0 = int(np.argmax(absd))
    sign = 1.0 if dots[j0] >= 0.0 else -1.0
    return j0, float(absd[j0]), sign


def _row_argmax_loop(a_mat, x):
    m, d = a_mat.shape
    best = -math.inf
    j0 = -1
    sign = 1.0
    for j in range(m):
        s = 0.0
        for c in range(d):
            s += a_mat[j, c] * x[c]
        a = abs(s)
        if a > best:
            best = a
            j0 = j
            sign = 1.0 if s >= 0.0 else -1.0
    return j0, best, sign


# ---------------------------------------------------------------------------
# staircase argmax: max_i <v_i, x> - (i+1)*gamma over the scaled sign vectors


def nem_argmax_numpy(nem_mat, x, gamma):
    """Smallest index attaining max_i (<v_i,x> - (i+1)*gamma); returns (i0, term)."""
    terms = nem_mat @ x - gamma * np.arange(1, nem_mat.shape[0] + 1)
    i0 = int(np.argmax(terms))
    return i0, float(terms[i0])


def _nem_argmax_loop(nem_mat, x, gamma):
    n, d = nem_mat.shape
    best = -math.inf
    i0 = -1
    for i in range(n):
        s = 0.0
        for c in range(d):
            s += nem_mat[i, c] * x[c]
        t = s - (i + 1) * gamma
        if t > best:
            best = t
            i0 = i
    return i0, best


# ---------------------------------------------------------------------------
# single inner product with the same summation order as the loops above


def single_dot_numpy(a, x):
    return float(np.dot(a, x))


def _single_dot_loop(a, x):
    s = 0.0
    for c in range(a.shape[0]):
        s += a[c] * x[c]
    return s


# ---------------------------------------------------------------------------
# central-cut ellipsoid update


def ellipsoid_step_numpy(c, p_mat, cut):
    """One central cut {x: <cut, x - c> <= 0}; returns (c2, P2, ok)."""
    d = c.shape[0]
    pg = p_mat @ cut
    gpg = float(cut @ pg)
    if not math.isfinite(gpg) or gpg <= 0.0:
        return c, p_mat, False
    b = pg / math.sqrt(gpg)
    c2 = c - b / (d + 1.0)
    coef = d * d / (d * d - 1.0)
    p2 = coef * (p_mat - (2.0 / (d + 1.0)) * np.outer(b, b))
    p2 = 0.5 * (p2 + p2.T)
    return c2, p2, True


def _ellipsoid_step_loop(c, p_mat, cut):
    d = c.shape[0]
    pg = np.empty(d)
    for i in range(d):
        s = 0.0
        for j in range(d):
            s += p_mat[i, j] * cut[j]
        pg[i] = s
    gpg = 0.0
    for i in range(d):
        gpg += cut[i] * pg[i]
    if not math.isfinite(gpg) or gpg <= 0.0:
        return c, p_mat, False
    inv = 1.0 / math.sqrt(gpg)
    b = pg * inv
    c2 = np.empty(d)
    for i in range(d):
        c2[i] = c[i] - b[i] / (d + 1.0)
    coef = d * d / (d * d - 1.0)
    two = 2.0 / (d + 1.0)
    p2 = np.empty((d, d))
    for i in range(d):
        for j in range(i, d):
            v = coef * (0.5 * (p_mat[i, j] + p_mat[j, i]) - two * b[i] * b[j])
            p2[i, j] = v
            p2[j, i] = v
    return c2, p2, True


# ---------------------------------------------------------------------------
# selection

row_argmax_jit = njit(cache=True)(_row_argmax_loop)
nem_argmax_jit = njit(cache=True)(_nem_argmax_loop)
single_dot_jit = njit(cache=True)(_single_dot_loop)
ellipsoid_step_jit = njit(cache=True)(_ellipsoid_step_loop)

if USE_NUMBA:
    row_argmax = row_argmax_jit
    nem_argmax = nem_argmax_jit
    single_dot = single_dot_jit
    ellipsoid_step = ellipsoid_step_jit
else:
    row_argmax = row_argmax_numpy
    nem_argmax = nem_argmax_numpy
    single_dot = single_dot_numpy
    ellipsoid_step = ellipsoid_step_numpy


def warmup():
    """Trigger JIT compilation on tiny inputs (no-op on the numpy path)."""
    a = np.ones((2, 4))
    x = np.zeros(4)
    row_argmax(a, x)
    nem_argmax(a / 2.0, x, 0.5)
    single_dot(a[0], x)
    ellipsoid_step(x, np.eye(4), np.ones(4))
