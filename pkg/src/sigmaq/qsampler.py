"""Weighted samples under the sigma-finite measures ``Q = int dl Q_l``.

Under ``Q_l`` the path follows the base process until ``tau_l``, the first
time its increasing process exceeds ``l``, and then continues from zero as
the process conditioned never to vanish again:

* reflected Brownian motion (``Q_ABS_BM``): Bessel(3) afterwards;
* Brownian motion (``W_PLUS``/``W_MINUS``): plus or minus Bessel(3), with
  levels measured in half local time (the increasing process of ``B^+``);
  ``W`` picks the branch with a fair coin and doubles the weight;
* Bessel(d), ``0 < d < 2`` (``Q_BESSEL(d)``): Bessel(4 - d) afterwards.

Two samplers are provided. :func:`sample_q_spliced` produces one full
:class:`WeightedSample`, extending the base path until ``tau_l`` is reached.
:func:`window_block` produces many samples restricted to a fixed window
``[0, horizon]``, which is all an ``F_t``-measurable integrand can see: if
``tau_l`` falls beyond the window the base path is kept as is. The
Brownian-based samplers place ``tau_l`` at the right end of the grid
interval in which the local time crosses ``l``.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from . import kernels
from .errors import BudgetExhausted, ConfigurationError
from .estimators import BLOCK, CylinderFunctional, EstimatorResult, run_blocks
from .functionals import (
    ClassSigmaPath,
    IndicatorInterval,
    IntegrableTestFunction,
    azema_constant,
    levy_arrays,
    levy_block,
    zero_mask,
)
from .grid import TimeGrid
from .paths import (
    Kind,
    PathSample,
    ProcessSpec,
    _walk,
    bessel_values,
    draw_brownian,
    exp_martingale_block,
    extend_path,
    simulate_bessel,
    simulate_bm,
)
from .rng import STREAM_EXTEND, STREAM_P, STREAM_Q, SeedLike, derive_rng, seed_id


# ---------------------------------------------------------------- measure tags


@dataclass(frozen=True)
class MeasureTag:
    name: str
    param: Optional[float] = None

    def __str__(self):
        return self.name if self.param is None else f"{self.name}({self.param:g})"

    @property
    def spliced(self) -> bool:
        return self.name in ("Q_ABS_BM", "W", "W_PLUS", "W_MINUS", "Q_BESSEL", "S_AZEMA")

    @property
    def brownian_levels(self) -> bool:
        """Levels are read off a Levy-constructed Brownian path."""
        if self.name == "S_AZEMA":
            return self.param == 0.5
        return self.name in ("Q_ABS_BM", "W", "W_PLUS", "W_MINUS")

    @property
    def weight(self) -> float:
        if self.name == "W":
            return 2.0
        if self.name == "S_AZEMA":
            return 1.0 / azema_constant(self.param)
        return 1.0


Q_ABS_BM = MeasureTag("Q_ABS_BM")
W = MeasureTag("W")
W_PLUS = MeasureTag("W_PLUS")
W_MINUS = MeasureTag("W_MINUS")
CLASS_D = MeasureTag("CLASS_D")
BS_KP = MeasureTag("BS_KP")


def Q_BESSEL(d: float) -> MeasureTag:
    if not (0.0 < d < 2.0):
        raise ConfigurationError(f"Q_BESSEL needs d in (0, 2), got {d!r}")
    return MeasureTag("Q_BESSEL", float(d))


def S_AZEMA(alpha: float) -> MeasureTag:
    if not (0.0 < alpha < 1.0):
        raise ConfigurationError(f"S_AZEMA needs alpha in (0, 1), got {alpha!r}")
    return MeasureTag("S_AZEMA", float(alpha))


_TAG_RE = re.compile(r"^([A-Z_]+)(?:\(([^)]*)\))?$")


def parse_tag(text: str) -> MeasureTag:
    m = _TAG_RE.match(text.strip())
    if not m:
        raise ConfigurationError(f"cannot parse measure tag {text!r}")
    name, arg = m.groups()
    if name == "Q_BESSEL":
        return Q_BESSEL(float(arg))
    if name == "S_AZEMA":
        return S_AZEMA(float(arg))
    for tag in (Q_ABS_BM, W, W_PLUS, W_MINUS, CLASS_D, BS_KP):
        if tag.name == name and arg is None:
            return tag
    raise ConfigurationError(f"unknown measure tag {text!r}")


# ---------------------------------------------------------------- level proposals


@dataclass(frozen=True)
class LevelProposal:
    """Density for the splice level: ``exponential`` (rate) or ``uniform`` on ``(0, upper]``."""

    kind: str
    param: float

    def __post_init__(self):
        if self.kind not in ("exponential", "uniform"):
            raise ConfigurationError(f"unknown proposal {self.kind!r}")
        if not self.param > 0:
            raise ConfigurationError("proposal parameter must be positive")

    @classmethod
    def exponential(cls, rate: float = 1.0) -> "LevelProposal":
        return cls("exponential", float(rate))

    @classmethod
    def uniform(cls, upper: float) -> "LevelProposal":
        return cls("uniform", float(upper))

    @classmethod
    def default_for(cls, h: IntegrableTestFunction) -> "LevelProposal":
        if isinstance(h, IndicatorInterval):
            return cls.uniform(h.upper)
        return cls.exponential(1.0)

    def from_uniform(self, u):
        """Map ``u`` in (0, 1] to a level in (0, inf)."""
        if self.kind == "exponential":
            return -np.log(u) / self.param
        return self.param * u

    def pdf(self, l):
        l = np.asarray(l, dtype=np.float64)
        if self.kind == "exponential":
            return np.where(l >= 0, self.param * np.exp(-self.param * np.maximum(l, 0.0)), 0.0)
        return np.where((l > 0) & (l <= self.param), 1.0 / self.param, 0.0)

    def check_covers(self, h: IntegrableTestFunction) -> None:
        if self.kind == "uniform" and h.support_upper > self.param:
            raise ConfigurationError(
                f"uniform proposal on (0, {self.param:g}] misses part of the support of {h!r}"
            )


# ---------------------------------------------------------------- single samples


@dataclass
class WeightedSample:
    """One draw under a sigma-finite measure.

    ``path`` is the canonical process (reflected BM, signed BM, Bessel or
    the Azema process), ``sigma`` carries ``X`` and its increasing process
    frozen at ``level`` after ``splice_time``.
    """

    path: PathSample
    level: float
    splice_time: float
    weight: float
    measure_tag: MeasureTag
    sigma: ClassSigmaPath
    meta: dict = field(default_factory=dict)


def _levy_levels(tag: MeasureTag, s):
    return 0.5 * s if tag.name in ("W", "W_PLUS", "W_MINUS") else s


def _first_above(lev, l):
    """First index with ``lev > l`` per row, -1 if none."""
    above = lev > l
    k = np.argmax(above, axis=-1)
    return np.where(above.any(axis=-1), k, -1)


def _base_until_tau(tag, l, sid, grid, budget, eps):
    """Simulate the base process, extending until its level exceeds ``l``."""
    d = tag.param if tag.name == "Q_BESSEL" else 2 * (1 - tag.param) if tag.name == "S_AZEMA" else None
    if tag.brownian_levels:
        base = simulate_bm((sid, STREAM_Q, 0), grid)
    else:
        base = simulate_bessel((sid, STREAM_Q, 0), grid, d)
    j = 0
    while True:
        if tag.brownian_levels:
            s, flags = kernels.running_max_refined(base.values[None, :], base.interval_max[None, :])
            lev = _levy_levels(tag, s[0])
            x = s[0] - base.values
            flags = flags[0]
        else:
            band = kernels.bessel_band(eps, grid.step)
            lev = kernels.besq_compensator(base.values, d, grid.step, band)
            x = base.values
            flags = None
        k = int(_first_above(lev, l))
        if k >= 0:
            return base, x, lev, flags, k
        if base.grid.horizon * 2 > budget:
            raise BudgetExhausted(
                f"local time stayed below {l!r} up to t={base.grid.horizon!r} (budget {budget!r})"
            )
        j += 1
        base = extend_path(base, base.grid.horizon, (sid, STREAM_EXTEND, j))


def sample_q_spliced(
    tag: MeasureTag,
    l: float,
    seed: SeedLike,
    grid: TimeGrid,
    post_horizon: float,
    budget: float = 256.0,
    eps: float = 0.01,
) -> WeightedSample:
    """Splice the base path at ``tau_l`` and continue for ``post_horizon``.

    ``grid`` fixes the step and the initial simulation length; the base is
    doubled until ``tau_l`` is reached or its length would exceed ``budget``,
    in which case :class:`BudgetExhausted` is raised.
    """
    if isinstance(tag, str):
        tag = parse_tag(tag)
    if tag.name not in ("Q_ABS_BM", "W", "W_PLUS", "W_MINUS", "Q_BESSEL"):
        raise ConfigurationError(f"{tag} is not a spliced measure")
    if not l > 0:
        raise ConfigurationError("level must be positive")
    sid = seed_id(seed)
    step = grid.step
    base, x, lev, flags, k = _base_until_tau(tag, l, sid, grid, budget, eps)
    m = TimeGrid.from_horizon(step, post_horizon).n
    aux = derive_rng((sid, STREAM_EXTEND, 0))
    if tag.brownian_levels:
        coins = aux.random(k) < 0.5
        branch = aux.random() < 0.5
        post = kernels.bes3_paths(np.zeros(1), aux.standard_normal((1, m, 3)), step)[0]
        if tag.name == "Q_ABS_BM":
            sign = 1.0
            pre = x[: k + 1].copy()
        else:
            signs = kernels.excursion_signs(flags[None, :k], coins[None, :])[0]
            pre = x[: k + 1] * signs
            sign = {"W": 1.0 if branch else -1.0, "W_PLUS": 1.0, "W_MINUS": -1.0}[tag.name]
        pre[k] = 0.0
        path = np.concatenate([pre, sign * post[1:]])
        xs = path if tag.name == "Q_ABS_BM" else np.maximum(sign * path, 0.0)
        mask = np.zeros(k + m + 1, dtype=bool)
        mask[0] = True
        mask[1 : k + 1] = flags[:k]
        mask[: k + 1] |= xs[: k + 1] <= 0.0
        tol = 0.0
        kind_meta = {"branch": sign}
    else:
        d = tag.param
        alpha = 1.0 - d / 2.0
        post = bessel_values(aux, 0.0, 4.0 - d, step, m)
        pre = x[: k + 1].copy()
        pre[k] = 0.0
        path = np.concatenate([pre, post[1:]])
        xs = path ** (2 * alpha)
        band = kernels.bessel_band(eps, step)
        tol = band ** (2 * alpha)
        # the threshold applies before the splice only: Bessel(4 - d) started
        # at zero does not return there
        mask = np.zeros(k + m + 1, dtype=bool)
        mask[: k + 1] = xs[: k + 1] <= tol
        kind_meta = {}
    mask[k] = True
    a = np.concatenate([np.minimum(lev[: k + 1], l), np.full(m, float(l))])
    a[k:] = l
    g2 = TimeGrid(step, k + m)
    sigma = ClassSigmaPath(g2, xs, a, tol, str(tag), None, path,
                           {"splice_index": k, "zero_mask": mask})
    sample = PathSample(ProcessSpec(Kind.SPLICED), g2, path, seed_id=sid,
                        meta={"measure": str(tag), **kind_meta})
    return WeightedSample(sample, float(l), g2.time(k), tag.weight, tag, sigma)


def sample_azema_image(alpha: float, l: float, seed: SeedLike, grid: TimeGrid,
                       post_horizon: Optional[float] = None, budget: float = 256.0,
                       eps: float = 0.01) -> WeightedSample:
    """``V_t = (t - g(t))^alpha`` up to ``tau_l`` and ``u^alpha`` at ``tau_l + u``.

    ``l`` is measured in the local time of the base process (Levy-exact
    reflected BM when ``alpha = 1/2``, else Bessel(2(1 - alpha)) with the
    grid compensator); the constant ``1 / (2^alpha Gamma(1 + alpha))``
    becomes the sample weight.
    """
    tag = S_AZEMA(alpha)
    post_horizon = grid.horizon if post_horizon is None else post_horizon
    if alpha == 0.5:
        ws = sample_q_spliced(Q_ABS_BM, l, seed, grid, post_horizon, budget, eps)
    else:
        ws = sample_q_spliced(Q_BESSEL(2 * (1 - alpha)), l, seed, grid, post_horizon, budget, eps)
    sg = ws.sigma
    mask = sg.zero_mask
    g = np.maximum(kernels.last_true_index(mask[None, :])[0], 0)
    idx = np.arange(sg.grid.n + 1)
    v = (sg.grid.step * (idx - g)) ** alpha
    sigma = ClassSigmaPath(sg.grid, v, sg.a / azema_constant(alpha), 0.0, str(tag),
                           None, v, {"zero_mask": mask, "splice_index": sg.meta["splice_index"]})
    path = PathSample(ProcessSpec(Kind.SPLICED), sg.grid, v, seed_id=ws.path.seed_id,
                      meta={"measure": str(tag)})
    return WeightedSample(path, float(l), ws.splice_time, tag.weight, tag, sigma)


# ---------------------------------------------------------------- window blocks


def _levy_window(tag, proposal, master, stream, indices, grid, race):
    n, step = grid.n, grid.step
    rows = len(indices)
    signed = tag.name in ("W", "W_PLUS", "W_MINUS")
    u_lev = np.empty(rows)
    z = np.empty((rows, n))
    umax = np.empty((rows, n))
    umin = np.empty((rows, n))
    coins = np.empty((rows, n), dtype=bool) if signed else None
    branch = np.ones(rows)
    rngs = []
    for r, i in enumerate(indices):
        rng = derive_rng((master, stream, i))
        u_lev[r] = 1.0 - rng.random()
        z[r], umax[r], umin[r] = draw_brownian(rng, n)
        if signed:
            coins[r] = rng.random(n) < 0.5
            branch[r] = 1.0 if rng.random() < 0.5 else -1.0
        rngs.append(rng)
    levels = proposal.from_uniform(u_lev)
    w = _walk(np.zeros(rows), step, z)
    hi = kernels.bridge_max(w[:, :-1], w[:, 1:], step, umax)
    x, s, flags = levy_arrays(w, hi)
    lev = _levy_levels(tag, s)
    k = _first_above(lev, levels[:, None])

    if tag.name == "W_PLUS":
        branch[:] = 1.0
    elif tag.name == "W_MINUS":
        branch[:] = -1.0
    signs = kernels.excursion_signs(flags, coins) if signed else None
    base = x * signs if signed else x

    # post-splice normals come after all base draws of the same stream
    spliced = np.flatnonzero(k >= 0)
    post = np.zeros((rows, n + 1))
    if spliced.size:
        zp = np.zeros((spliced.size, n, 3))
        for j, r in enumerate(spliced):
            m = n - k[r]
            if m:
                zp[j, :m] = rngs[r].standard_normal((m, 3))
        post[spliced] = kernels.bes3_paths(np.zeros(spliced.size), zp, step)
    cols = np.arange(n + 1)[None, :]
    after = (k[:, None] >= 0) & (cols >= k[:, None])
    offs = np.clip(cols - k[:, None], 0, n)
    post_vals = np.take_along_axis(post, offs, axis=1)
    out_sign = branch[:, None] if signed else 1.0
    path = np.where(after, out_sign * post_vals, base)
    mask = zero_mask(x, 0.0, flags)
    if tag.name == "W_PLUS":
        mask |= path <= 0.0
    elif tag.name == "W_MINUS":
        mask |= path >= 0.0
    mask &= ~(after & (cols > k[:, None]))
    res = {
        "level": levels,
        "k": k,
        "path": path,
        "mask": mask,
        "a": np.minimum(lev, levels[:, None]),
        "lev_t": lev[:, -1],
        "weight": np.full(rows, tag.weight),
    }
    if tag.name == "S_AZEMA":
        g = np.maximum(kernels.last_true_index(mask), 0)
        res["path"] = (step * (cols - g)) ** tag.param
    res["x"] = _x_of(tag, res["path"])
    if race:
        lo = kernels.bridge_min(w[:, :-1], w[:, 1:], step, umin)
        res.update(_race(tag, rngs, levels, k, base, x, s, flags, lo, lev))
    return res


def _race(tag, rngs, levels, k, y, x, s, flags, lo, lev):
    """Decide ``{g_S <= t}`` for the drawdown reading of ``W_MINUS``.

    ``g_S`` is the last time the signed path sits at its overall maximum.
    Spliced rows have it at or before ``tau_l``. For the others the path
    after ``t`` is Brownian until ``tau_l`` and then negative, so the
    event is a race between reaching the running max ``s_t`` and
    accumulating the missing ``l - A_t`` of half local time at zero, which
    (from zero, before reaching ``s_t``) is exponential with mean ``s_t``.
    """
    if tag.name != "W_MINUS":
        raise ConfigurationError("the maximum race is defined for W_MINUS only")
    rows = len(rngs)
    u = np.empty((rows, 2))
    for r in range(rows):
        u[r] = 1.0 - rngs[r].random(2)
    # per-interval max of the signed path: exact off the zero-containing intervals
    pos = y[:, 1:] > 0
    ymax = np.where(pos, s[:, :-1] - lo, -x[:, 1:])
    ymax = np.where(flags, np.maximum(np.maximum(y[:, :-1], y[:, 1:]), 0.0), ymax)
    smax = np.maximum(ymax.max(axis=1), 0.0)
    yt = y[:, -1]
    gap = levels - lev[:, -1]
    with np.errstate(divide="ignore", invalid="ignore"):
        p_up = np.where(smax > 0, np.maximum(yt, 0.0) / smax, 1.0)
        excess = -smax * np.log(u[:, 1])
    ok = (smax > 0) & (u[:, 0] > p_up) & (excess > gap)
    ind = np.where(k >= 0, 1.0, ok.astype(np.float64))
    return {"race": ind, "smax_t": smax, "y_t": yt}


def _bessel_window(tag, proposal, master, stream, indices, grid, eps):
    n, step = grid.n, grid.step
    rows = len(indices)
    d = tag.param if tag.name == "Q_BESSEL" else 2 * (1 - tag.param)
    alpha = 1.0 - d / 2.0
    band = kernels.bessel_band(eps, step)
    path = np.empty((rows, n + 1))
    mask = np.empty((rows, n + 1), dtype=bool)
    a = np.empty((rows, n + 1))
    levels = np.empty(rows)
    k = np.empty(rows, dtype=np.int64)
    lev_t = np.empty(rows)
    for r, i in enumerate(indices):
        rng = derive_rng((master, stream, i))
        levels[r] = proposal.from_uniform(1.0 - rng.random())
        y = bessel_values(rng, 0.0, d, step, n)
        lev = kernels.besq_compensator(y, d, step, band)
        kr = int(_first_above(lev, levels[r]))
        k[r] = kr
        lev_t[r] = lev[-1]
        mask[r] = y <= band
        if kr >= 0:
            post = bessel_values(rng, 0.0, 4.0 - d, step, n - kr)
            y = y.copy()
            y[kr:] = post
            mask[r, kr] = True
            mask[r, kr + 1:] = False
        path[r] = y
        a[r] = np.minimum(lev, levels[r])
    res = {"level": levels, "k": k, "path": path, "mask": mask, "a": a,
           "lev_t": lev_t, "weight": np.full(rows, tag.weight)}
    if tag.name == "S_AZEMA":
        g = np.maximum(kernels.last_true_index(mask), 0)
        res["path"] = (step * (np.arange(n + 1)[None, :] - g)) ** alpha
        res["x"] = res["path"]
    else:
        res["x"] = path ** (2 * alpha)
    return res


def _x_of(tag, path):
    """The class (Sigma) process read off the canonical path."""
    if tag.name == "W_PLUS":
        return np.maximum(path, 0.0)
    if tag.name == "W_MINUS":
        return np.maximum(-path, 0.0)
    if tag.name == "W":
        return np.abs(path)
    return path


def window_block(tag: MeasureTag, proposal: LevelProposal, master: int, stream: int,
                 indices: Sequence[int], grid: TimeGrid, eps: float = 0.01, race: bool = False) -> dict:
    """Samples under ``tag`` restricted to ``[0, grid.horizon]``, one row per index.

    Keys: ``level``, ``k`` (splice index, -1 beyond the window), ``path``
    (canonical process), ``x`` (the class (Sigma) process), ``mask`` (zeros
    of ``x``), ``a`` (increasing process, frozen
    at the level), ``lev_t`` (unspliced level variable at the horizon) and
    ``weight``; with ``race`` also ``race``, ``smax_t`` and ``y_t``.
    """
    if not tag.spliced:
        raise ConfigurationError(f"{tag} has no level decomposition")
    if tag.brownian_levels:
        return _levy_window(tag, proposal, master, stream, indices, grid, race)
    if race:
        raise ConfigurationError("the maximum race is defined for W_MINUS only")
    return _bessel_window(tag, proposal, master, stream, indices, grid, eps)


# ---------------------------------------------------------------- integrals


def q_integral(
    tag: MeasureTag,
    H: CylinderFunctional,
    h: IntegrableTestFunction,
    proposal: Optional[LevelProposal] = None,
    n: int = 100_000,
    seed: int = 0,
    grid: Optional[TimeGrid] = None,
    eps: float = 0.01,
    workers: int = 1,
    block: int = BLOCK,
) -> EstimatorResult:
    """Estimate ``Q[H h(A_inf)] = int h(l) E_{Q_l}[H] dl`` by sampling ``l`` from ``proposal``.

    ``H`` is read on ``[0, grid.horizon]``.
    """
    if isinstance(tag, str):
        tag = parse_tag(tag)
    grid = grid or TimeGrid.from_horizon(2.0 ** -10, 1.0)
    proposal = proposal or LevelProposal.default_for(h)
    proposal.check_covers(h)
    if H.last_time > grid.horizon:
        raise ConfigurationError("functional reads past the window")
    if H.is_zero:
        return EstimatorResult(0.0, 0.0, max(n, 2))

    def one(idx):
        b = window_block(tag, proposal, seed, STREAM_Q, idx, grid, eps)
        l = b["level"]
        wts = b["weight"] * h.f(l) / proposal.pdf(l)
        return wts * H.evaluate(grid, b["path"], b["mask"], grid.n)

    return EstimatorResult.from_samples(run_blocks(one, n, block, workers))


def _abs_bm_x_inf(b):
    return b["x"][:, -1]


def reweight_class_d(
    x_inf: Optional[Callable] = None,
    H: Optional[CylinderFunctional] = None,
    n: int = 100_000,
    seed: int = 0,
    grid: Optional[TimeGrid] = None,
    workers: int = 1,
    block: int = BLOCK,
) -> EstimatorResult:
    """``E_P[X_inf H]`` for reflected Brownian motion stopped at the horizon.

    ``x_inf`` maps a Levy block (keys ``x``, ``a``, ``w``, ``flags``) to the
    terminal value per row; by default ``|B_horizon|``. ``H`` sees the
    reflected path and its zeros up to the horizon.
    """
    grid = grid or TimeGrid.from_horizon(2.0 ** -10, 1.0)
    x_inf = x_inf or _abs_bm_x_inf
    from .estimators import ONE

    H = H or ONE
    if H.is_zero:
        return EstimatorResult(0.0, 0.0, max(n, 2))

    def one(idx):
        b = levy_block(seed, STREAM_P, idx, grid)
        mask = zero_mask(b["x"], 0.0, b["flags"])
        return x_inf(b) * H.evaluate(grid, b["x"], mask, grid.n)

    return EstimatorResult.from_samples(run_blocks(one, n, block, workers))


def bs_measure_expectation(
    K: float,
    H: CylinderFunctional,
    n: int = 100_000,
    seed: int = 0,
    grid: Optional[TimeGrid] = None,
    x0: float = 1.0,
    workers: int = 1,
    block: int = BLOCK,
) -> EstimatorResult:
    """``K`` times the mean of ``H`` over exponential-martingale paths."""
    if K < 0:
        raise ConfigurationError("K must be nonnegative")
    grid = grid or TimeGrid.from_horizon(2.0 ** -10, 1.0)
    if K == 0 or H.is_zero:
        return EstimatorResult(0.0, 0.0, max(n, 2))

    def one(idx):
        v, hi, lo = exp_martingale_block(seed, STREAM_P, idx, grid, x0)
        mask = np.zeros(v.shape, dtype=bool)
        return H.evaluate(grid, v, mask, grid.n)

    return EstimatorResult.from_samples(run_blocks(one, n, block, workers)).scaled(K)
