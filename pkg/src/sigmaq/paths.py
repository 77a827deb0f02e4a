"""Exact-in-law simulation of the driving processes on time grids.

Brownian motion and the exponential martingale come with per-interval
extrema drawn from the Brownian-bridge laws given the interval's endpoints.
Bessel paths are exact at grid times only.

Each single-path function takes a seed (an int, or a ``(master, *keys)``
tuple) and returns a :class:`PathSample`. The ``*_block`` functions build
many paths at once from per-sample streams; row ``i`` of a block built with
``(master, stream)`` equals the single path for seed ``(master, stream, i)``.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from . import kernels
from .errors import ConfigurationError, UnsupportedError
from .grid import TimeGrid
from .rng import SeedLike, derive_rng, seed_id as _seed_id


class Kind(str, enum.Enum):
    BROWNIAN = "BrownianMotion"
    EXP_MARTINGALE = "ExpMartingale"
    BESSEL = "Bessel"
    BESSEL3 = "Bessel3"
    NEG_BESSEL3 = "NegBessel3"
    SPLICED = "Spliced"


BROWNIAN_KINDS = (Kind.BROWNIAN, Kind.EXP_MARTINGALE)


@dataclass(frozen=True)
class ProcessSpec:
    kind: Kind
    x0: float = 0.0
    delta: Optional[float] = None

    def __post_init__(self):
        kind = Kind(self.kind)
        object.__setattr__(self, "kind", kind)
        if kind is Kind.EXP_MARTINGALE and not self.x0 > 0:
            raise ConfigurationError("ExpMartingale requires x0 > 0")
        if kind in (Kind.BESSEL, Kind.BESSEL3, Kind.NEG_BESSEL3) and self.x0 < 0:
            raise ConfigurationError("Bessel processes start at x0 >= 0")
        if kind is Kind.BESSEL:
            if self.delta is None or not (0.0 < self.delta < 2.0):
                raise ConfigurationError(f"Bessel requires delta in (0, 2), got {self.delta!r}")
        elif kind in (Kind.BESSEL3, Kind.NEG_BESSEL3):
            if self.delta not in (None, 3, 3.0):
                raise ConfigurationError("Bessel3 fixes delta = 3")
            object.__setattr__(self, "delta", 3.0)


@dataclass
class PathSample:
    """One simulated trajectory on a grid.

    ``interval_max[i]`` / ``interval_min[i]`` bound the path on
    ``[t_i, t_{i+1}]`` and are present for Brownian kinds only.
    """

    spec: ProcessSpec
    grid: TimeGrid
    values: np.ndarray
    interval_max: Optional[np.ndarray] = None
    interval_min: Optional[np.ndarray] = None
    seed_id: int = 0
    meta: dict = field(default_factory=dict)

    @property
    def kind(self) -> Kind:
        return self.spec.kind

    @property
    def is_brownian(self) -> bool:
        return self.spec.kind in BROWNIAN_KINDS

    def restrict(self, n: int) -> "PathSample":
        """The path on the first ``n`` steps."""
        return PathSample(
            self.spec,
            TimeGrid(self.grid.step, n),
            self.values[: n + 1].copy(),
            None if self.interval_max is None else self.interval_max[:n].copy(),
            None if self.interval_min is None else self.interval_min[:n].copy(),
            self.seed_id,
            dict(self.meta),
        )


# ---------------------------------------------------------------- draws


def draw_brownian(rng: np.random.Generator, n: int):
    """Normals and two uniform arrays in (0, 1] for one Brownian path."""
    z = rng.standard_normal(n)
    umax = 1.0 - rng.random(n)
    umin = 1.0 - rng.random(n)
    return z, umax, umin


def _walk(start, step, z):
    """Cumulative Gaussian walk along the last axis, ``start`` prepended."""
    z = np.asarray(z)
    inc = math.sqrt(step) * z
    out = np.empty(z.shape[:-1] + (z.shape[-1] + 1,))
    out[..., 0] = start
    np.cumsum(inc, axis=-1, out=out[..., 1:])
    out[..., 1:] += np.expand_dims(np.asarray(start, dtype=np.float64), -1)
    return out


def _extrema(v, step, umax, umin):
    return (
        kernels.bridge_max(v[..., :-1], v[..., 1:], step, umax),
        kernels.bridge_min(v[..., :-1], v[..., 1:], step, umin),
    )


def _exp_from_log(x0, log_v, step, umax, umin, t0=0.0):
    n = log_v.shape[-1] - 1
    t = t0 + step * np.arange(n + 1)
    lv = math.log(x0) + log_v - 0.5 * t
    lo_hi = _extrema(lv, step, umax, umin)
    return np.exp(lv), np.exp(lo_hi[0]), np.exp(lo_hi[1])


# ---------------------------------------------------------------- single paths


def simulate_bm(seed: SeedLike, grid: TimeGrid, x0: float = 0.0) -> PathSample:
    rng = derive_rng(seed)
    z, umax, umin = draw_brownian(rng, grid.n)
    v = _walk(float(x0), grid.step, z)
    hi, lo = _extrema(v, grid.step, umax, umin)
    return PathSample(ProcessSpec(Kind.BROWNIAN, x0), grid, v, hi, lo, _seed_id(seed))


def simulate_exp_martingale(seed: SeedLike, grid: TimeGrid, x0: float = 1.0) -> PathSample:
    """``M_t = x0 exp(B_t - t/2)`` with ``B`` the Brownian path of the same seed.

    Extrema are bridge extrema of ``log M`` (a Brownian bridge once the
    endpoints are fixed, whatever the drift), mapped back by ``exp``.
    """
    if not x0 > 0:
        raise ConfigurationError("ExpMartingale requires x0 > 0")
    rng = derive_rng(seed)
    z, umax, umin = draw_brownian(rng, grid.n)
    b = _walk(0.0, grid.step, z)
    v, hi, lo = _exp_from_log(x0, b, grid.step, umax, umin)
    return PathSample(ProcessSpec(Kind.EXP_MARTINGALE, x0), grid, v, hi, lo, _seed_id(seed))


def exp_martingale_from_bm(b: PathSample, x0: float = 1.0) -> np.ndarray:
    """Deterministic map ``b -> x0 exp(b_t - t/2)`` on grid values."""
    return x0 * np.exp(b.values - 0.5 * b.grid.times)


def _bessel_general(rng, y0, delta, step, n):
    u = 1.0 - rng.random(8 * n + 64)
    while True:
        vals, used = kernels.besq_path(y0, delta, step, n, u)
        if used >= 0:
            return vals
        u = np.concatenate([u, 1.0 - rng.random(u.shape[0])])


def _check_delta(delta):
    if not ((0.0 < delta < 2.0) or delta == 3):
        raise ConfigurationError(f"Bessel dimension must lie in (0, 2) or equal 3, got {delta!r}")


def simulate_bessel(seed: SeedLike, grid: TimeGrid, delta: float, x0: float = 0.0) -> PathSample:
    _check_delta(delta)
    if x0 < 0:
        raise ConfigurationError("Bessel processes start at x0 >= 0")
    rng = derive_rng(seed)
    vals = bessel_values(rng, float(x0), float(delta), grid.step, grid.n)
    kind = Kind.BESSEL3 if delta == 3 else Kind.BESSEL
    return PathSample(ProcessSpec(kind, x0, delta), grid, vals, seed_id=_seed_id(seed))


def bessel_values(rng: np.random.Generator, y0: float, delta: float, step: float, n: int) -> np.ndarray:
    """Bessel(delta) grid values for any ``delta > 0`` (internal; no range check)."""
    if delta == 3:
        z = rng.standard_normal((1, n, 3))
        return kernels.bes3_paths(np.array([y0]), z, step)[0]
    return _bessel_general(rng, y0, delta, step, n)


def simulate(spec: ProcessSpec, seed: SeedLike, grid: TimeGrid) -> PathSample:
    if spec.kind is Kind.BROWNIAN:
        return simulate_bm(seed, grid, spec.x0)
    if spec.kind is Kind.EXP_MARTINGALE:
        return simulate_exp_martingale(seed, grid, spec.x0)
    if spec.kind is Kind.BESSEL:
        return simulate_bessel(seed, grid, spec.delta, spec.x0)
    if spec.kind in (Kind.BESSEL3, Kind.NEG_BESSEL3):
        p = simulate_bessel(seed, grid, 3.0, spec.x0)
        if spec.kind is Kind.NEG_BESSEL3:
            p = PathSample(spec, grid, -p.values, seed_id=p.seed_id)
        return p
    raise UnsupportedError("spliced paths are produced by the Q samplers")


def extend_path(sample: PathSample, extra_horizon: float, seed: SeedLike) -> PathSample:
    """Continue ``sample`` for ``extra_horizon`` with the same transition law.

    The restriction of the result to the original grid is the input,
    bitwise; the continuation draws from ``seed``.
    """
    if sample.kind is Kind.SPLICED:
        raise UnsupportedError("cannot extend a spliced path")
    step = sample.grid.step
    if extra_horizon == 0:
        return sample.restrict(sample.grid.n)
    if extra_horizon < 0:
        raise ConfigurationError("extra_horizon must be nonnegative")
    m = TimeGrid.from_horizon(step, extra_horizon).n
    grid = sample.grid.extended(m)
    rng = derive_rng(seed)
    last = sample.values[-1]
    hi = lo = None
    if sample.kind is Kind.BROWNIAN:
        z, umax, umin = draw_brownian(rng, m)
        tail = _walk(last, step, z)
        h2, l2 = _extrema(tail, step, umax, umin)
        hi = np.concatenate([sample.interval_max, h2])
        lo = np.concatenate([sample.interval_min, l2])
    elif sample.kind is Kind.EXP_MARTINGALE:
        z, umax, umin = draw_brownian(rng, m)
        b = _walk(0.0, step, z)
        tail, h2, l2 = _exp_from_log(last, b, step, umax, umin)
        tail[0] = last
        hi = np.concatenate([sample.interval_max, h2])
        lo = np.concatenate([sample.interval_min, l2])
    else:
        tail = bessel_values(rng, abs(float(last)), sample.spec.delta, step, m)
        if sample.kind is Kind.NEG_BESSEL3:
            tail = -tail
    values = np.concatenate([sample.values, tail[1:]])
    return PathSample(sample.spec, grid, values, hi, lo, sample.seed_id, dict(sample.meta))


def bridge_hit_probability(a: float, b: float, step: float, level: float) -> float:
    """Probability that a Brownian bridge from ``a`` to ``b`` over ``step`` touches ``level``."""
    if (a - level) * (b - level) > 0:
        return math.exp(-2.0 * (a - level) * (b - level) / step)
    return 1.0


# ---------------------------------------------------------------- blocks


def brownian_block(
    master: int, stream: int, indices: Sequence[int], grid: TimeGrid, x0: float = 0.0
):
    """Brownian paths for samples ``indices``: ``(values, hi, lo)``, each 2-D."""
    k = len(indices)
    z = np.empty((k, grid.n))
    umax = np.empty((k, grid.n))
    umin = np.empty((k, grid.n))
    for r, i in enumerate(indices):
        z[r], umax[r], umin[r] = draw_brownian(derive_rng((master, stream, i)), grid.n)
    v = _walk(np.full(k, float(x0)), grid.step, z)
    hi, lo = _extrema(v, grid.step, umax, umin)
    return v, hi, lo


def exp_martingale_block(
    master: int, stream: int, indices: Sequence[int], grid: TimeGrid, x0: float = 1.0
):
    k = len(indices)
    z = np.empty((k, grid.n))
    umax = np.empty((k, grid.n))
    umin = np.empty((k, grid.n))
    for r, i in enumerate(indices):
        z[r], umax[r], umin[r] = draw_brownian(derive_rng((master, stream, i)), grid.n)
    b = _walk(np.zeros(k), grid.step, z)
    return _exp_from_log(x0, b, grid.step, umax, umin)
