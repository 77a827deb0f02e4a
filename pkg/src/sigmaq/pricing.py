"""European puts as last-passage probabilities.

For ``M_t = x0 exp(B_t - t/2)`` and ``g_K = sup{t : M_t = K}`` (zero when
``M`` never visits ``K``), ``E[(K - M_t)^+] = K P(g_K <= t)``.

``P(g_K <= t)`` is estimated path by path without an indicator:

* on ``(t, T_max]`` the chance that ``M`` avoids ``K`` given the grid values
  is a product of Brownian-bridge non-crossing probabilities of ``log M``;
* after ``T_max``, ``P(sup_{u >= T_max} M_u >= K | F_{T_max}) = min(1, M_{T_max} / K)``
  for a continuous positive martingale tending to zero, so the remaining
  horizon contributes the exact factor ``1 - min(1, M_{T_max} / K)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from scipy import stats

from . import kernels
from .errors import ConfigurationError
from .estimators import BLOCK, EstimatorResult, run_blocks
from .grid import TimeGrid
from .paths import Kind, ProcessSpec, exp_martingale_block
from .rng import STREAM_P
from .verify import VerifyConfig, make_report

DEFAULT_STEP = 2.0 ** -6


@dataclass(frozen=True)
class PutSpec:
    K: float
    t: float
    x0: float = 1.0
    T_max: float = 8.0
    step: float = DEFAULT_STEP

    def __post_init__(self):
        if not self.K > 0:
            raise ConfigurationError("strike must be positive")
        if not self.t >= 0:
            raise ConfigurationError("maturity must be nonnegative")
        if not self.x0 > 0:
            raise ConfigurationError("x0 must be positive")
        if self.T_max < self.t:
            raise ConfigurationError(f"simulation horizon {self.T_max!r} is shorter than maturity {self.t!r}")

    @property
    def model(self) -> ProcessSpec:
        return ProcessSpec(Kind.EXP_MARTINGALE, self.x0)

    @property
    def grid(self) -> TimeGrid:
        return TimeGrid.from_horizon(self.step, self.T_max)


def bs_closed_form(K: float, t: float, x0: float) -> float:
    """Put price with unit volatility and zero rate."""
    if not (K > 0 and t > 0 and x0 > 0):
        raise ConfigurationError("K, t and x0 must be positive")
    st = math.sqrt(t)
    d1 = (math.log(x0 / K) + 0.5 * t) / st
    d2 = d1 - st
    return K * stats.norm.cdf(-d2) - x0 * stats.norm.cdf(-d1)


def _paths(spec: PutSpec, seed: int, idx):
    v, hi, lo = exp_martingale_block(seed, STREAM_P, idx, spec.grid, spec.x0)
    return v


def survival_after(spec: PutSpec, v: np.ndarray) -> np.ndarray:
    """``P(g_K <= t_j | grid values)`` for every grid index ``j``, shape like ``v``."""
    grid = spec.grid
    surv = kernels.no_hit_survival(np.log(v), math.log(spec.K), grid.step)
    tail = 1.0 - np.minimum(1.0, v[:, -1] / spec.K)
    return surv * tail[:, None]


def mc_put_price(spec: PutSpec, n: int = 100_000, seed: int = 0, workers: int = 1,
                 block: int = BLOCK) -> EstimatorResult:
    """Plain Monte Carlo of ``(K - M_t)^+``."""
    k = spec.grid.index_of(spec.t)

    def one(idx):
        return np.maximum(spec.K - _paths(spec, seed, idx)[:, k], 0.0)

    return EstimatorResult.from_samples(run_blocks(one, n, block, workers))


def last_passage_cdf(spec: PutSpec, n: int = 100_000, seed: int = 0, workers: int = 1,
                     block: int = BLOCK, times: Optional[Sequence[float]] = None):
    """Estimate ``P(g_K <= t)``; with ``times``, a list of estimates on the same paths."""
    grid = spec.grid
    cols = [grid.index_of(s) for s in (times if times is not None else [spec.t])]

    def one(idx):
        return survival_after(spec, _paths(spec, seed, idx))[:, cols]

    vals = run_blocks(one, n, block, workers)
    res = [EstimatorResult.from_samples(vals[:, j]) for j in range(len(cols))]
    return res if times is not None else res[0]


def price_report(spec: PutSpec, n: int = 100_000, seed: int = 0, c: Optional[float] = None,
                 cfg: Optional[VerifyConfig] = None, workers: int = 1, block: int = BLOCK) -> list:
    """Put price three ways plus one conditional instance.

    Reports, all on the same paths where both sides are simulated:
    ``put_vs_last_passage``, ``put_vs_closed_form``,
    ``last_passage_vs_closed_form`` and ``conditional_put`` with
    ``F = 1{M_{t/2} <= c}`` (``c`` defaults to ``x0``). The grid must
    contain ``t/2``.
    """
    cfg = cfg or VerifyConfig(n=n, seed=seed, step=spec.step, horizon=spec.T_max)
    grid = spec.grid
    k = grid.index_of(spec.t)
    kh = grid.index_of(spec.t / 2)
    c = spec.x0 if c is None else c

    def one(idx):
        v = _paths(spec, seed, idx)
        put = np.maximum(spec.K - v[:, k], 0.0)
        lp = spec.K * survival_after(spec, v)[:, k]
        F = (v[:, kh] <= c).astype(np.float64)
        return put, lp, put * F, lp * F

    put, lp, put_f, lp_f = run_blocks(one, n, block, workers)
    put_r = EstimatorResult.from_samples(put)
    lp_r = EstimatorResult.from_samples(lp)
    exact = EstimatorResult.exact(bs_closed_form(spec.K, spec.t, spec.x0), n) if spec.t > 0 else \
        EstimatorResult.exact(max(spec.K - spec.x0, 0.0), n)
    echo = {"K": spec.K, "t": spec.t, "x0": spec.x0, "T_max": spec.T_max, "step": spec.step}
    paired = EstimatorResult.from_samples(put - lp)
    return [
        make_report("put_vs_last_passage", put_r, lp_r, cfg,
                    {"paired_diff": paired.mean, "paired_stderr": paired.stderr}, **echo),
        make_report("put_vs_closed_form", put_r, exact, cfg, **echo),
        make_report("last_passage_vs_closed_form", lp_r, exact, cfg, **echo),
        make_report("conditional_put", EstimatorResult.from_samples(put_f), EstimatorResult.from_samples(lp_f),
                    cfg, {"c": c}, **echo),
    ]
