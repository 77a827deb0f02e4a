"""Class (Sigma) pairs ``(X, A)`` built from simulated paths, and their functionals.

A :class:`ClassSigmaPath` stores ``X`` and its increasing process ``A`` on a
grid together with the information needed to locate zeros of ``X``:

* a threshold ``zero_tol`` (grid value ``x <= zero_tol`` counts as a zero);
* optionally ``zero_flags``, one per interval, marking intervals known to
  contain a zero. The Levy construction sets these exactly from the bridge
  maxima. A flagged interval ``(t_i, t_{i+1}]`` places its zero at
  ``t_{i+1}``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence, Union

import numpy as np

from . import kernels
from .errors import ConfigurationError, UnsupportedError
from .grid import TimeGrid
from .paths import Kind, PathSample, brownian_block, simulate_bm, bessel_values
from .rng import SeedLike, derive_rng


@dataclass
class ClassSigmaPath:
    grid: TimeGrid
    x: np.ndarray
    a: np.ndarray
    zero_tol: float = 0.0
    model_tag: str = ""
    zero_flags: Optional[np.ndarray] = None
    values: Optional[np.ndarray] = None
    meta: dict = field(default_factory=dict)

    @property
    def n(self) -> int:
        return self.grid.n

    @property
    def path(self) -> np.ndarray:
        """The canonical path (the underlying process), defaulting to ``x``."""
        return self.x if self.values is None else self.values

    @property
    def zero_mask(self) -> np.ndarray:
        if "zero_mask" in self.meta:
            return self.meta["zero_mask"]
        return zero_mask(self.x[None, :], self.zero_tol,
                         None if self.zero_flags is None else self.zero_flags[None, :])[0]

    @property
    def n_martingale(self) -> np.ndarray:
        return self.x - self.a

    def carried_on_zeros(self) -> bool:
        """True when ``a`` only increases on intervals touching a zero."""
        mask = self.zero_mask
        grows = self.a[1:] > self.a[:-1]
        return bool(np.all(~grows | mask[:-1] | mask[1:]))


def zero_mask(x, tol, flags=None):
    """Grid indices counted as zeros, shape ``(batch, n + 1)``."""
    mask = x <= tol
    if flags is not None:
        mask = mask.copy()
        mask[:, 1:] |= flags
    return mask


# ---------------------------------------------------------------- test functions


class IntegrableTestFunction:
    """Nonnegative integrable ``f`` with closed-form tail ``G(x) = int_x^inf f``."""

    def f(self, x):
        raise NotImplementedError

    def G(self, x):
        raise NotImplementedError

    @property
    def support_upper(self) -> float:
        return math.inf

    @property
    def mass(self) -> float:
        return float(self.G(np.array(0.0)))


@dataclass(frozen=True)
class Exponential(IntegrableTestFunction):
    """Unit-mass density ``rate * exp(-rate x)``; ``G(x) = exp(-rate x)``."""

    rate: float = 1.0

    def __post_init__(self):
        if not self.rate > 0:
            raise ConfigurationError("Exponential rate must be positive")

    def f(self, x):
        x = np.asarray(x, dtype=np.float64)
        return np.where(x >= 0, self.rate * np.exp(-self.rate * np.maximum(x, 0.0)), 0.0)

    def G(self, x):
        x = np.asarray(x, dtype=np.float64)
        return np.exp(-self.rate * np.maximum(x, 0.0))


@dataclass(frozen=True)
class IndicatorInterval(IntegrableTestFunction):
    """``f = 1_[0, upper]``."""

    upper: float = 1.0

    def __post_init__(self):
        if not self.upper > 0:
            raise ConfigurationError("IndicatorInterval needs a positive upper end")

    def f(self, x):
        x = np.asarray(x, dtype=np.float64)
        return ((x >= 0) & (x <= self.upper)).astype(np.float64)

    def G(self, x):
        x = np.asarray(x, dtype=np.float64)
        return np.clip(self.upper - np.maximum(x, 0.0), 0.0, None)

    @property
    def support_upper(self) -> float:
        return self.upper


@dataclass(frozen=True)
class PiecewiseConstant(IntegrableTestFunction):
    """``f = levels[k]`` on ``[breakpoints[k], breakpoints[k+1])``, zero past the end.

    ``breakpoints`` starts at 0 and has one more entry than ``levels``; an
    empty ``levels`` is the zero function.
    """

    breakpoints: tuple = (0.0,)
    levels: tuple = ()

    def __post_init__(self):
        b = tuple(float(v) for v in self.breakpoints)
        lv = tuple(float(v) for v in self.levels)
        if len(b) != len(lv) + 1 or b[0] != 0.0 or any(np.diff(b) <= 0):
            raise ConfigurationError("breakpoints must start at 0, increase, and bracket the levels")
        if any(v < 0 for v in lv):
            raise ConfigurationError("levels must be nonnegative")
        object.__setattr__(self, "breakpoints", b)
        object.__setattr__(self, "levels", lv)

    def f(self, x):
        x = np.asarray(x, dtype=np.float64)
        out = np.zeros_like(x)
        for lo, hi, v in zip(self.breakpoints[:-1], self.breakpoints[1:], self.levels):
            out = np.where((x >= lo) & (x < hi), v, out)
        return out

    def G(self, x):
        x = np.maximum(np.asarray(x, dtype=np.float64), 0.0)
        out = np.zeros_like(x)
        for lo, hi, v in zip(self.breakpoints[:-1], self.breakpoints[1:], self.levels):
            out = out + v * np.clip(hi - np.maximum(x, lo), 0.0, None)
        return out

    @property
    def support_upper(self) -> float:
        return self.breakpoints[-1]


# ---------------------------------------------------------------- stopping rules


@dataclass(frozen=True)
class Deterministic:
    t: float


@dataclass(frozen=True)
class HittingLevel:
    """First time the path reaches ``level`` (from either side), capped at ``cap``."""

    level: float
    cap: float


@dataclass(frozen=True)
class MinOf:
    first: "StoppingRule"
    second: "StoppingRule"


StoppingRule = Union[Deterministic, HittingLevel, MinOf]


def rule_cap(rule: StoppingRule) -> float:
    """Upper bound of the rule, used to size paths."""
    if isinstance(rule, Deterministic):
        return rule.t
    if isinstance(rule, HittingLevel):
        return rule.cap
    return min(rule_cap(rule.first), rule_cap(rule.second))


def stopping_indices(rule: StoppingRule, grid: TimeGrid, x, lo=None, hi=None) -> np.ndarray:
    """Per-row grid index of the stopping time on a block of paths ``x``."""
    rows = x.shape[0]
    if isinstance(rule, Deterministic):
        return np.full(rows, grid.index_of(rule.t), dtype=np.int64)
    if isinstance(rule, HittingLevel):
        if rule.cap > grid.horizon + 1e-12 * grid.step:
            raise ConfigurationError(f"stopping cap {rule.cap!r} exceeds horizon {grid.horizon!r}")
        cap = grid.index_of(rule.cap)
        return kernels.first_hit_index(x, rule.level, cap, lo, hi)
    if isinstance(rule, MinOf):
        return np.minimum(stopping_indices(rule.first, grid, x, lo, hi),
                          stopping_indices(rule.second, grid, x, lo, hi))
    raise ConfigurationError(f"unknown stopping rule {rule!r}")


def eval_stopping_time(rule: StoppingRule, path: Union[ClassSigmaPath, PathSample]) -> float:
    """Grid time at which ``rule`` stops ``path``.

    On a :class:`ClassSigmaPath` the designated coordinate is ``x`` and
    hitting is detected at grid times. On a Brownian :class:`PathSample`
    the bridge extrema also flag crossings inside an interval.
    """
    if isinstance(path, ClassSigmaPath):
        idx = stopping_indices(rule, path.grid, path.x[None, :])
    else:
        lo = hi = None
        if path.is_brownian and path.interval_max is not None:
            lo, hi = path.interval_min[None, :], path.interval_max[None, :]
        idx = stopping_indices(rule, path.grid, path.values[None, :], lo, hi)
    return path.grid.time(int(idx[0]))


# ---------------------------------------------------------------- constructions


def levy_arrays(w, hi):
    """``(x, a, flags)`` from Brownian values and bridge maxima via Levy's identity."""
    s, flags = kernels.running_max_refined(w, hi)
    return s - w, s - w[:, :1], flags


def build_abs_bm_levy(seed: SeedLike, grid: TimeGrid) -> ClassSigmaPath:
    """Reflected Brownian motion and its local time at zero.

    ``(S - W, S)`` has the law of ``(|B|, L)``; ``S`` includes the bridge
    maxima, so zeros of ``x`` are located exactly up to the grid interval.
    """
    bm = simulate_bm(seed, grid)
    x, a, flags = levy_arrays(bm.values[None, :], bm.interval_max[None, :])
    return ClassSigmaPath(grid, x[0], a[0], 0.0, "abs_bm", flags[0], x[0],
                          {"w": bm.values, "seed_id": bm.seed_id})


def build_drawdown(mart: PathSample) -> ClassSigmaPath:
    if mart.kind not in (Kind.BROWNIAN, Kind.EXP_MARTINGALE):
        raise UnsupportedError(f"drawdown needs a Brownian or exponential martingale, got {mart.kind}")
    m = mart.values[None, :]
    if mart.interval_max is not None:
        s, flags = kernels.running_max_refined(m, mart.interval_max[None, :])
        flags = flags[0]
    else:
        s = np.maximum.accumulate(m, axis=1)
        flags = None
    x = (s - m)[0]
    a = (s - m[:, :1])[0]
    return ClassSigmaPath(mart.grid, x, a, 0.0, "drawdown", flags, mart.values.copy())


def build_positive_part(mart: PathSample, eps: float) -> ClassSigmaPath:
    """``X = M^+`` with ``A`` = half the occupation-density local time at 0."""
    if not eps > 0:
        raise ConfigurationError("eps must be positive")
    if mart.kind is not Kind.BROWNIAN:
        raise UnsupportedError("positive part is built from Brownian motion")
    m = mart.values[None, :]
    occ = kernels.occupation_time(m, eps, mart.grid.step)[0]
    a = occ / (2.0 * eps) / 2.0
    return ClassSigmaPath(mart.grid, np.maximum(mart.values, 0.0), a, float(eps),
                          "positive_part", None, mart.values.copy())


def build_bessel_scale(bessel: PathSample, alpha: float, eps: float) -> ClassSigmaPath:
    """``X = Y^(2 alpha)`` for a Bessel path of dimension ``2 (1 - alpha)``.

    ``A`` accumulates the exact one-step conditional drift of ``X`` at grid
    points within the zero band ``Y <= max(eps, 6 sqrt(step))``, which is
    also the zero threshold (in ``Y`` units).
    """
    if not (0 < alpha < 1):
        raise ConfigurationError("alpha must lie in (0, 1)")
    delta = bessel.spec.delta
    if bessel.kind is not Kind.BESSEL or delta is None or abs(delta - 2 * (1 - alpha)) > 1e-12:
        raise ConfigurationError(f"Bessel dimension {delta!r} does not match 2(1 - alpha)")
    if not eps > 0:
        raise ConfigurationError("eps must be positive")
    band = kernels.bessel_band(eps, bessel.grid.step)
    y = bessel.values
    x = y ** (2 * alpha)
    a = kernels.besq_compensator(y, delta, bessel.grid.step, band)
    return ClassSigmaPath(bessel.grid, x, a, band ** (2 * alpha), f"bessel_scale({alpha})",
                          None, bessel.values.copy(), {"band": band})


def azema_constant(alpha: float) -> float:
    """``2^alpha Gamma(1 + alpha)``."""
    return 2.0 ** alpha * math.gamma(1.0 + alpha)


def azema_arrays(x, a, tol, flags, step, alpha):
    mask = zero_mask(x, tol, flags)
    g = np.maximum(kernels.last_true_index(mask), 0)
    idx = np.arange(x.shape[1])
    return (step * (idx - g)) ** alpha, a / azema_constant(alpha)


def azema_projection(sigma: ClassSigmaPath, alpha: float) -> ClassSigmaPath:
    """``X_t = (t - g(t))^alpha`` with ``A`` rescaled by ``1 / (2^alpha Gamma(1 + alpha))``."""
    if not (0 < alpha < 1):
        raise ConfigurationError("alpha must lie in (0, 1)")
    flags = None if sigma.zero_flags is None else sigma.zero_flags[None, :]
    x, a = azema_arrays(sigma.x[None, :], sigma.a[None, :], sigma.zero_tol, flags,
                        sigma.grid.step, alpha)
    out = ClassSigmaPath(sigma.grid, x[0], a[0], 0.0, f"azema({alpha})", None, sigma.path, dict(sigma.meta))
    out.meta["zero_mask"] = sigma.zero_mask
    return out


# ---------------------------------------------------------------- zero functionals


def _mask_of(sigma: ClassSigmaPath) -> np.ndarray:
    return sigma.zero_mask


def last_zero(sigma: ClassSigmaPath, t: float) -> Optional[float]:
    """Largest zero time ``<= t``, or ``None`` when ``X`` has no zero on ``[0, t]``."""
    k = sigma.grid.index_of(t)
    hits = np.flatnonzero(_mask_of(sigma)[: k + 1])
    return None if hits.size == 0 else sigma.grid.time(int(hits[-1]))


def first_zero_after(sigma: ClassSigmaPath, t: float) -> Optional[float]:
    k = sigma.grid.index_of(t)
    hits = np.flatnonzero(_mask_of(sigma)[k + 1:])
    return None if hits.size == 0 else sigma.grid.time(k + 1 + int(hits[0]))


def inverse_local_time(sigma: ClassSigmaPath, l: float) -> Optional[float]:
    """First grid time with ``a > l``.

    ``None`` means ``a`` never exceeds ``l`` on the grid: the path must be
    extended before the inverse can be read off.
    """
    if not l > 0:
        raise ConfigurationError("level must be positive")
    above = np.flatnonzero(sigma.a > l)
    return None if above.size == 0 else sigma.grid.time(int(above[0]))


def mf_transform(sigma: ClassSigmaPath, f: IntegrableTestFunction) -> np.ndarray:
    """``G(A_t) + f(A_t) X_t`` along the path."""
    return f.G(sigma.a) + f.f(sigma.a) * sigma.x


# ---------------------------------------------------------------- blocks


def levy_block(master: int, stream: int, indices: Sequence[int], grid: TimeGrid) -> dict:
    """Levy-constructed reflected Brownian motion for a block of samples."""
    w, hi, lo = brownian_block(master, stream, indices, grid)
    x, a, flags = levy_arrays(w, hi)
    return {"w": w, "hi": hi, "lo": lo, "x": x, "a": a, "flags": flags}


def bessel_block(master: int, stream: int, indices: Sequence[int], grid: TimeGrid,
                 delta: float, x0: float = 0.0) -> np.ndarray:
    out = np.empty((len(indices), grid.n + 1))
    for r, i in enumerate(indices):
        out[r] = bessel_values(derive_rng((master, stream, i)), x0, delta, grid.step, grid.n)
    return out
