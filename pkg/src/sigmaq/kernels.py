"""Inner loops over path arrays.

Each kernel has a loop implementation (compiled by numba when enabled) and a
numpy implementation. The public wrapper picks one according to
:data:`sigmaq._jit.USE_NUMBA`. All kernels take 2-D arrays ``(batch, time)``
and never draw random numbers themselves; randomness is pre-drawn by the
caller from per-sample streams, which keeps the two backends in agreement.

The general squared-Bessel transition is the one kernel without a vectorized
numpy twin: its fallback is the same loop run by the interpreter.
"""

from __future__ import annotations

import math

import numpy as np
from scipy import special

from . import _jit
from ._jit import njit

# ---------------------------------------------------------------- bridges


def bridge_max(a, b, step, u):
    """Maximum of a Brownian bridge from ``a`` to ``b`` over ``step``.

    Inverse-CDF draw: ``P(max >= m) = exp(-2 (m - a)(m - b) / step)``.
    ``u`` must lie in ``(0, 1]``.
    """
    d = b - a
    return 0.5 * (a + b + np.sqrt(d * d - 2.0 * step * np.log(u)))


def bridge_min(a, b, step, u):
    d = b - a
    return 0.5 * (a + b - np.sqrt(d * d - 2.0 * step * np.log(u)))


def bridge_cross_probability(a, b, step, level):
    """Vectorized probability that the bridge from ``a`` to ``b`` touches ``level``."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    da = a - level
    db = b - level
    same_side = da * db > 0
    with np.errstate(over="ignore", invalid="ignore"):
        p = np.exp(-2.0 * np.where(same_side, da * db, 0.0) / step)
    return np.where(same_side, p, 1.0)


# ---------------------------------------------------------------- running max


@njit
def _running_max_loop(w, bmax):
    rows, n = bmax.shape
    s = np.empty((rows, n + 1))
    flags = np.zeros((rows, n), dtype=np.bool_)
    for r in range(rows):
        cur = w[r, 0]
        s[r, 0] = cur
        for i in range(n):
            m = bmax[r, i]
            if m >= cur:
                flags[r, i] = True
                cur = m
            s[r, i + 1] = cur
    return s, flags


def _running_max_np(w, bmax):
    s = np.maximum.accumulate(np.concatenate([w[:, :1], bmax], axis=1), axis=1)
    flags = bmax >= s[:, :-1]
    return s, flags


def running_max_refined(w, bmax):
    """Running maximum including per-interval bridge maxima.

    Returns ``(s, flags)``: ``s[:, j]`` is the supremum over ``[0, t_j]`` and
    ``flags[:, i]`` marks intervals in which the supremum is attained, i.e.
    intervals containing a zero of ``s - w``.
    """
    w = np.ascontiguousarray(w, dtype=np.float64)
    bmax = np.ascontiguousarray(bmax, dtype=np.float64)
    if _jit.USE_NUMBA:
        return _running_max_loop(w, bmax)
    return _running_max_np(w, bmax)


# ---------------------------------------------------------------- last index


@njit
def _last_true_loop(mask):
    rows, n = mask.shape
    out = np.empty((rows, n), dtype=np.int64)
    for r in range(rows):
        cur = -1
        for j in range(n):
            if mask[r, j]:
                cur = j
            out[r, j] = cur
    return out


def _last_true_np(mask):
    idx = np.where(mask, np.arange(mask.shape[1], dtype=np.int64), -1)
    return np.maximum.accumulate(idx, axis=1)


def last_true_index(mask):
    """``out[r, j]`` = largest ``k <= j`` with ``mask[r, k]``, or -1."""
    mask = np.ascontiguousarray(mask, dtype=np.bool_)
    if _jit.USE_NUMBA:
        return _last_true_loop(mask)
    return _last_true_np(mask)


# ---------------------------------------------------------------- excursion signs


@njit
def _excursion_signs_loop(flags, coins):
    rows, n = flags.shape
    out = np.empty((rows, n + 1))
    for r in range(rows):
        cur = 1.0
        out[r, 0] = 1.0
        for i in range(n):
            if flags[r, i]:
                cur = 1.0 if coins[r, i] else -1.0
            out[r, i + 1] = cur
    return out


def _excursion_signs_np(flags, coins):
    rows, n = flags.shape
    last = _last_true_np(flags)
    picked = np.take_along_axis(coins, np.maximum(last, 0), axis=1)
    signs = np.where(last >= 0, np.where(picked, 1.0, -1.0), 1.0)
    return np.concatenate([np.ones((rows, 1)), signs], axis=1)


def excursion_signs(flags, coins):
    """Sign of each grid value given zero-containing intervals and fair coins.

    A fresh coin is used after every interval that contains a zero; grid
    times separated by no zero share the sign of their excursion.
    """
    flags = np.ascontiguousarray(flags, dtype=np.bool_)
    coins = np.ascontiguousarray(coins, dtype=np.bool_)
    if _jit.USE_NUMBA:
        return _excursion_signs_loop(flags, coins)
    return _excursion_signs_np(flags, coins)


# ---------------------------------------------------------------- Bessel(3)


@njit
def _bes3_loop(y0, z, step):
    rows, m, _ = z.shape
    out = np.empty((rows, m + 1))
    sq = math.sqrt(step)
    for r in range(rows):
        y = y0[r]
        out[r, 0] = y
        for i in range(m):
            c = y + sq * z[r, i, 0]
            e1 = z[r, i, 1]
            e2 = z[r, i, 2]
            y = math.sqrt(c * c + step * (e1 * e1 + e2 * e2))
            out[r, i + 1] = y
    return out


def _bes3_np(y0, z, step):
    rows, m, _ = z.shape
    out = np.empty((rows, m + 1))
    sq = math.sqrt(step)
    y = y0.copy()
    out[:, 0] = y
    for i in range(m):
        c = y + sq * z[:, i, 0]
        e1 = z[:, i, 1]
        e2 = z[:, i, 2]
        y = np.sqrt(c * c + step * (e1 * e1 + e2 * e2))
        out[:, i + 1] = y
    return out


def bes3_paths(y0, z, step):
    """Bessel(3) values from exact squared-Bessel transitions.

    ``y0`` has shape ``(batch,)`` and ``z`` standard normals of shape
    ``(batch, m, 3)``; ``BESQ_3(t + h) = (y + sqrt(h) z1)^2 + h (z2^2 + z3^2)``
    given ``BESQ_3(t) = y^2``.
    """
    y0 = np.ascontiguousarray(y0, dtype=np.float64)
    z = np.ascontiguousarray(z, dtype=np.float64)
    if _jit.USE_NUMBA:
        return _bes3_loop(y0, z, float(step))
    return _bes3_np(y0, z, float(step))


# ---------------------------------------------------------------- general BESQ

# Variates below consume a flat buffer of uniforms in (0, 1]. They return the
# updated position, or -1 once the buffer runs out so that the caller can
# retry with more draws from the same stream.


@njit
def _normal(u, pos):
    if pos + 2 > u.shape[0]:
        return 0.0, -1
    r = math.sqrt(-2.0 * math.log(u[pos]))
    return r * math.cos(2.0 * math.pi * u[pos + 1]), pos + 2


@njit
def _gamma(shape, u, pos):
    boost = 1.0
    if shape < 1.0:
        if pos + 1 > u.shape[0]:
            return 0.0, -1
        boost = u[pos] ** (1.0 / shape)
        pos += 1
        shape += 1.0
    d = shape - 1.0 / 3.0
    c = 1.0 / math.sqrt(9.0 * d)
    while True:
        x, pos = _normal(u, pos)
        if pos < 0:
            return 0.0, -1
        v = 1.0 + c * x
        if v <= 0.0:
            continue
        v = v * v * v
        if pos + 1 > u.shape[0]:
            return 0.0, -1
        w = u[pos]
        pos += 1
        if math.log(w) < 0.5 * x * x + d - d * v + d * math.log(v):
            return boost * d * v, pos


@njit
def _poisson_small(lam, u, pos):
    if pos + 1 > u.shape[0]:
        return 0, -1
    w = u[pos]
    pos += 1
    k = 0
    p = math.exp(-lam)
    cdf = p
    while w > cdf and k < 10_000:
        k += 1
        p *= lam / k
        cdf += p
    return k, pos


@njit
def _poisson_ptrs(lam, u, pos):
    # transformed rejection with squeeze (Hormann 1993)
    slam = math.sqrt(lam)
    loglam = math.log(lam)
    b = 0.931 + 2.53 * slam
    a = -0.059 + 0.02483 * b
    invalpha = 1.1239 + 1.1328 / (b - 3.4)
    vr = 0.9277 - 3.6224 / (b - 2.0)
    while True:
        if pos + 2 > u.shape[0]:
            return 0, -1
        uu = u[pos] - 0.5
        v = u[pos + 1]
        pos += 2
        us = 0.5 - abs(uu)
        k = math.floor((2.0 * a / us + b) * uu + lam + 0.43)
        if us >= 0.07 and v <= vr:
            return int(k), pos
        if k < 0 or (us < 0.013 and v > us):
            continue
        lhs = math.log(v) + math.log(invalpha) - math.log(a / (us * us) + b)
        rhs = -lam + k * loglam - math.lgamma(k + 1.0)
        if lhs <= rhs:
            return int(k), pos


@njit
def _poisson(lam, u, pos):
    if lam <= 0.0:
        return 0, pos
    if lam < 10.0:
        return _poisson_small(lam, u, pos)
    return _poisson_ptrs(lam, u, pos)


@njit
def besq_path_loop(y0, delta, step, n, u):
    """One Bessel(delta) path on ``n`` steps; returns ``(values, used)``.

    ``BESQ(t + h) = 2 h Gamma(delta / 2 + N)`` with
    ``N ~ Poisson(BESQ(t) / (2 h))``: the noncentral chi-square transition
    written as a Poisson mixture of central ones. ``used`` is -1 when ``u``
    was too short.
    """
    out = np.empty(n + 1)
    out[0] = y0
    sq = y0 * y0
    pos = 0
    for i in range(n):
        k, pos = _poisson(sq / (2.0 * step), u, pos)
        if pos < 0:
            return out, -1
        g, pos = _gamma(0.5 * delta + k, u, pos)
        if pos < 0:
            return out, -1
        sq = 2.0 * step * g
        out[i + 1] = math.sqrt(sq)
    return out, pos


def besq_path(y0: float, delta: float, step: float, n: int, u: np.ndarray):
    u = np.ascontiguousarray(u, dtype=np.float64)
    if _jit.USE_NUMBA:
        return besq_path_loop(float(y0), float(delta), float(step), int(n), u)
    return besq_path_loop.py_func(float(y0), float(delta), float(step), int(n), u)


# ---------------------------------------------------------------- occupation


@njit
def _occupation_loop(m, eps, step):
    rows, n1 = m.shape
    out = np.zeros((rows, n1))
    for r in range(rows):
        acc = 0.0
        prev = 1.0 if abs(m[r, 0]) <= eps else 0.0
        for j in range(1, n1):
            cur = 1.0 if abs(m[r, j]) <= eps else 0.0
            acc += step * (0.5 * (prev + cur))
            out[r, j] = acc
            prev = cur
    return out


def _occupation_np(m, eps, step):
    ind = (np.abs(m) <= eps).astype(np.float64)
    inc = step * (0.5 * (ind[:, :-1] + ind[:, 1:]))
    out = np.zeros_like(ind)
    np.cumsum(inc, axis=1, out=out[:, 1:])
    return out


def occupation_time(m, eps, step):
    """Cumulative trapezoid-rule time spent in ``[-eps, eps]``."""
    m = np.ascontiguousarray(m, dtype=np.float64)
    if _jit.USE_NUMBA:
        return _occupation_loop(m, float(eps), float(step))
    return _occupation_np(m, float(eps), float(step))


# ---------------------------------------------------------------- Bessel compensator

BAND_SIGMAS = 6.0


def bessel_band(eps: float, step: float) -> float:
    """Width of the zero band for Bessel paths: at least six grid standard deviations."""
    return max(float(eps), BAND_SIGMAS * math.sqrt(step))


def besq_compensator(y, delta, step, band):
    """Increasing process of ``Y^(2 - delta)`` from one-step conditional drifts.

    For a Bessel(delta) grid path, ``E[Y_{t+h}^(2-delta) | Y_t = y]`` equals
    ``(2h)^(1-b) exp(-mu) 1F1(1; b; mu) / Gamma(b)`` with ``b = delta / 2``
    and ``mu = y^2 / (2h)``. Its excess over ``y^(2-delta)`` is summed over
    grid points with ``y <= band``; above the band it is negligible (of order
    ``exp(-mu)``) and is dropped so that the estimate grows only near zero.
    """
    y = np.asarray(y, dtype=np.float64)
    b = 0.5 * delta
    y0 = y[..., :-1]
    near = y0 <= band
    mu = np.where(near, y0 * y0 / (2.0 * step), 0.0)
    ex = (2.0 * step) ** (1.0 - b) * np.exp(-mu) * special.hyp1f1(1.0, b, mu) / special.gamma(b)
    c = np.where(near, np.maximum(ex - y0 ** (2.0 - delta), 0.0), 0.0)
    out = np.zeros(y.shape)
    np.cumsum(c, axis=-1, out=out[..., 1:])
    return out


# ---------------------------------------------------------------- hitting


@njit
def _first_hit_loop(values, level, lo, hi, use_bridge, cap):
    rows, n1 = values.shape
    out = np.empty(rows, dtype=np.int64)
    for r in range(rows):
        start = values[r, 0]
        hit = cap
        if start == level:
            hit = 0
        else:
            above = start > level
            for j in range(1, cap + 1):
                v = values[r, j]
                if (v <= level) if above else (v >= level):
                    hit = j
                    break
                if use_bridge:
                    if (lo[r, j - 1] <= level) if above else (hi[r, j - 1] >= level):
                        hit = j
                        break
        out[r] = hit
    return out


def _first_hit_np(values, level, lo, hi, use_bridge, cap):
    start = values[:, :1]
    above = start > level
    v = values[:, 1 : cap + 1]
    reached = np.where(above, v <= level, v >= level)
    if use_bridge:
        reached |= np.where(above, lo[:, :cap] <= level, hi[:, :cap] >= level)
    any_hit = reached.any(axis=1)
    first = np.argmax(reached, axis=1) + 1
    out = np.where(any_hit, first, cap).astype(np.int64)
    out[values[:, 0] == level] = 0
    return out


def first_hit_index(values, level, cap, lo=None, hi=None):
    """First grid index ``<= cap`` at which each row reaches ``level``.

    The level is reached from whichever side the row starts on; bridge
    extrema ``lo``/``hi`` (per interval), when given, flag crossings inside
    an interval at the interval's right end. Rows that never reach it get
    ``cap``.
    """
    values = np.ascontiguousarray(values, dtype=np.float64)
    use_bridge = lo is not None and hi is not None
    if not use_bridge:
        lo = hi = np.empty((values.shape[0], max(values.shape[1] - 1, 0)))
    lo = np.ascontiguousarray(lo, dtype=np.float64)
    hi = np.ascontiguousarray(hi, dtype=np.float64)
    if _jit.USE_NUMBA:
        return _first_hit_loop(values, float(level), lo, hi, use_bridge, int(cap))
    return _first_hit_np(values, float(level), lo, hi, use_bridge, int(cap))


# ---------------------------------------------------------------- no-hit survival


def no_hit_survival(logv, log_level, step):
    """``out[:, j]`` = P(no touch of ``log_level`` on ``(t_j, t_n]`` | grid values).

    Product of per-interval bridge non-crossing probabilities, accumulated
    from the right in log space.
    """
    p = bridge_cross_probability(logv[:, :-1], logv[:, 1:], step, log_level)
    with np.errstate(divide="ignore"):
        logq = np.log1p(-p)
    tail = np.zeros(logv.shape)
    tail[:, :-1] = np.cumsum(logq[:, ::-1], axis=1)[:, ::-1]
    return np.exp(tail)
