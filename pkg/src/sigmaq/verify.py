"""Paired Monte Carlo tests of the identities satisfied by ``Q``.

Each ``verify_*`` function estimates two quantities that must agree and
returns an :class:`IdentityReport`. The left side is usually a
``Q``-integral, made finite in one of two ways:

* restricted to ``{g <= t}`` and truncated to levels ``l <= R``, with the
  mass of the dropped levels bounded and folded into the bias budget;
* weighted by an integrable ``h(A_inf)``, which needs no truncation.

Verdicts: ``PASS`` when ``|z| <= z_crit``. Otherwise ``INCONCLUSIVE`` when
the gap is still within the bias budget plus ``z_crit`` pooled standard
errors, or when the truncation could not be certified; else ``FAIL``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np
from scipy import integrate, stats

from . import kernels
from .errors import ConfigurationError
from .estimators import (
    BLOCK,
    ONE,
    CylinderFunctional,
    EstimatorResult,
    run_blocks,
)
from .functionals import (
    Deterministic,
    IntegrableTestFunction,
    StoppingRule,
    azema_constant,
    levy_block,
    rule_cap,
    stopping_indices,
    zero_mask,
)
from .grid import TimeGrid
from .models import Model, p_block
from .qsampler import (
    Q_ABS_BM,
    W_MINUS,
    W_PLUS,
    LevelProposal,
    MeasureTag,
    q_integral,
    reweight_class_d,
    window_block,
)
from .rng import STREAM_P, STREAM_PILOT, STREAM_Q, STREAM_Q2

PASS = "PASS"
FAIL = "FAIL"
INCONCLUSIVE = "INCONCLUSIVE"


@dataclass(frozen=True)
class VerifyConfig:
    """Settings shared by the checks.

    ``q_oversample`` multiplies ``n`` on the ``Q`` side of truncated
    comparisons, whose per-sample variance is several times that of the
    ``P`` side. ``trunc_tol`` caps the certified truncation remainder;
    ``R`` starts at the ``trunc_quantile`` of the level at ``t`` (from
    ``pilot_n`` pilot paths) and doubles up to ``max_doublings`` times.
    """

    n: int = 100_000
    seed: int = 20240601
    step: float = 2.0 ** -10
    horizon: float = 1.0
    z_crit: float = 4.0
    q_oversample: int = 4
    trunc_quantile: float = 0.999
    trunc_tol: float = 2e-3
    max_doublings: int = 6
    pilot_n: int = 10_000
    eps: float = 0.01
    bessel_bias: float = 0.1
    workers: int = 1
    block: int = BLOCK
    drop_indicator: bool = False

    def __post_init__(self):
        for name in ("n", "step", "horizon", "z_crit", "q_oversample", "trunc_tol", "pilot_n", "eps", "block", "workers"):
            if not getattr(self, name) > 0:
                raise ConfigurationError(f"{name} must be positive")
        if self.n < 2:
            raise ConfigurationError("n must be at least 2")

    def grid(self, horizon: Optional[float] = None) -> TimeGrid:
        return TimeGrid.from_horizon(self.step, self.horizon if horizon is None else horizon)

    def echo(self) -> dict:
        return {"seed": self.seed, "n": self.n, "step": self.step, "horizon": self.horizon,
                "z_crit": self.z_crit, "q_oversample": self.q_oversample}


@dataclass
class IdentityReport:
    identity_id: str
    lhs: EstimatorResult
    rhs: EstimatorResult
    z: float
    verdict: str
    bias_budget: float
    n: int
    seed: int
    config: dict = field(default_factory=dict)
    extras: dict = field(default_factory=dict)

    @property
    def diff(self) -> float:
        return self.lhs.mean - self.rhs.mean

    @property
    def pooled_stderr(self) -> float:
        return math.hypot(self.lhs.stderr, self.rhs.stderr)


def z_score(lhs: EstimatorResult, rhs: EstimatorResult) -> float:
    se = math.hypot(lhs.stderr, rhs.stderr)
    diff = lhs.mean - rhs.mean
    if se == 0:
        return 0.0 if diff == 0 else math.copysign(math.inf, diff)
    return diff / se


def decide(lhs: EstimatorResult, rhs: EstimatorResult, z_crit: float, budget: float,
           certified: bool = True) -> tuple:
    z = z_score(lhs, rhs)
    if not certified:
        return z, INCONCLUSIVE
    if abs(z) <= z_crit:
        return z, PASS
    if abs(lhs.mean - rhs.mean) <= budget + z_crit * math.hypot(lhs.stderr, rhs.stderr):
        return z, INCONCLUSIVE
    return z, FAIL


def make_report(identity_id: str, lhs: EstimatorResult, rhs: EstimatorResult, cfg: VerifyConfig,
                extras: Optional[dict] = None, certified: bool = True, **echo) -> IdentityReport:
    budget = lhs.bias_budget + rhs.bias_budget
    z, verdict = decide(lhs, rhs, cfg.z_crit, budget, certified)
    config = cfg.echo()
    config.update(echo)
    return IdentityReport(identity_id, lhs, rhs, float(z), verdict, float(budget),
                          max(lhs.n, rhs.n), cfg.seed, config, dict(extras or {}))


def _as_model(model) -> Model:
    return model if isinstance(model, Model) else Model.parse(str(model))


def _check_adapted(F: CylinderFunctional, horizon: float):
    if F.last_time > horizon + 1e-12:
        raise ConfigurationError(f"functional reads time {F.last_time!r} past {horizon!r}")


# ---------------------------------------------------------------- truncation


def _remainder(model: Model, tag: MeasureTag, b: dict, R: float, bound: float) -> np.ndarray:
    """Per-sample bound on the ``Q``-mass of ``{g <= t}`` carried by levels above ``R``."""
    lev = b["lev_t"]
    rem = np.maximum(lev - R, 0.0)
    if model.uses_race:
        s = b["smax_t"]
        with np.errstate(divide="ignore", invalid="ignore"):
            tail = np.where(s > 0, (s - np.maximum(b["y_t"], 0.0)) * np.exp(-np.maximum(R - lev, 0.0) / s), 0.0)
        rem = rem + tail
    return tag.weight * bound * rem


def choose_truncation(model: Model, grid: TimeGrid, cfg: VerifyConfig, bound: float = 1.0):
    """Pick ``R`` from a pilot run; returns ``(R, pilot_remainder, certified)``."""
    tag = model.q_tag
    b = window_block(tag, LevelProposal.uniform(1.0), cfg.seed, STREAM_PILOT,
                     range(cfg.pilot_n), grid, cfg.eps, race=model.uses_race)
    R = float(np.quantile(b["lev_t"], cfg.trunc_quantile))
    R = max(R, grid.step)
    for _ in range(cfg.max_doublings + 1):
        rem = float(_remainder(model, tag, b, R, bound).mean())
        if rem <= cfg.trunc_tol:
            return R, rem, True
        R *= 2.0
    return R / 2.0, rem, False


# ---------------------------------------------------------------- the two sides


def _q_side(model: Model, F: CylinderFunctional, rule: StoppingRule, cfg: VerifyConfig,
            stream: int = STREAM_Q, tag: Optional[MeasureTag] = None):
    """Truncated estimate of ``Q[F_T 1{g <= T}]``; returns ``(result, extras, certified)``."""
    tag = tag or model.q_tag
    horizon = rule_cap(rule)
    grid = cfg.grid(horizon)
    if model.uses_race and not isinstance(rule, Deterministic):
        raise ConfigurationError("the drawdown comparison supports deterministic times only")
    R, pilot_rem, certified = choose_truncation(model, grid, cfg, F.bound)
    prop = LevelProposal.uniform(R)
    n = cfg.n * cfg.q_oversample

    def one(idx):
        b = window_block(tag, prop, cfg.seed, stream, idx, grid, cfg.eps, race=model.uses_race)
        T = stopping_indices(rule, grid, b["x"])
        if cfg.drop_indicator:
            ind = 1.0
        elif model.uses_race:
            ind = b["race"]
        else:
            ind = ((b["k"] >= 0) & (b["k"] <= T)).astype(np.float64)
        vals = b["weight"] * R * ind * F.evaluate(grid, b["path"], b["mask"], T)
        return vals, _remainder(model, tag, b, R, F.bound)

    vals, rem = run_blocks(one, n, cfg.block, cfg.workers)
    rem_res = EstimatorResult.from_samples(rem)
    budget = rem_res.mean + 3.0 * rem_res.stderr
    if model.name == "bessel":
        budget += cfg.bessel_bias * float(np.mean(np.abs(vals)))
    res = EstimatorResult.from_samples(vals, budget)
    extras = {"R": R, "remainder": rem_res.mean, "pilot_remainder": pilot_rem, "q_samples": n,
              "measure": str(tag)}
    return res, extras, certified


def _p_side(model: Model, F: CylinderFunctional, rule: StoppingRule, cfg: VerifyConfig,
            value: str = "x") -> EstimatorResult:
    """``E_P[F_T X_T]`` (``value='x'``) or ``E_P[F_T M_T]`` for the signed path (``'path'``)."""
    grid = cfg.grid(rule_cap(rule))

    def one(idx):
        b = p_block(model, cfg.seed, STREAM_P, idx, grid, cfg.eps)
        T = stopping_indices(rule, grid, b["x"])
        r = np.arange(len(idx))
        return F.evaluate(grid, b["path"], b["mask"], T) * b[value][r, T]

    return EstimatorResult.from_samples(run_blocks(one, cfg.n, cfg.block, cfg.workers))


# ---------------------------------------------------------------- identities


def verify_master(model, F: CylinderFunctional, t: float, cfg: VerifyConfig = VerifyConfig(),
                  identity_id: Optional[str] = None) -> IdentityReport:
    """``Q[F_t 1{g <= t}]`` against ``E_P[F_t X_t]``."""
    return verify_stopping(model, F, Deterministic(t), cfg, identity_id or f"master[{model}]")


def verify_stopping(model, F: CylinderFunctional, T: StoppingRule, cfg: VerifyConfig = VerifyConfig(),
                    identity_id: Optional[str] = None) -> IdentityReport:
    """``Q[F_T 1{g <= T}]`` against ``E_P[F_T X_T]`` for a bounded stopping rule.

    Both sides stop on the class (Sigma) process ``X`` of the model.
    """
    model = _as_model(model)
    _check_adapted(F, rule_cap(T))
    identity_id = identity_id or f"stopping[{model}]"
    # every model starts at X_0 = 0 and {g <= 0} is Q-null
    if F.is_zero or rule_cap(T) == 0:
        zero = EstimatorResult(0.0, 0.0, cfg.n)
        return make_report(identity_id, zero, zero, cfg, model=str(model), functional=F.name)
    lhs, extras, certified = _q_side(model, F, T, cfg)
    rhs = _p_side(model, F, T, cfg)
    return make_report(identity_id, lhs, rhs, cfg, extras, certified, model=str(model),
                       functional=F.name, rule=repr(T))


def verify_class_d(F: CylinderFunctional, T: StoppingRule, cfg: VerifyConfig = VerifyConfig(),
                   identity_id: str = "class_d") -> IdentityReport:
    """``E[F_T X_T]`` against ``E[F_T X_inf 1{g <= T}]`` for ``X = |B|`` stopped at the horizon.

    Both sides are read on the same paths.
    """
    grid = cfg.grid()
    _check_adapted(F, rule_cap(T))

    def one(idx):
        b = levy_block(cfg.seed, STREAM_P, idx, grid)
        x = b["x"]
        mask = zero_mask(x, 0.0, b["flags"])
        Ti = stopping_indices(T, grid, x)
        r = np.arange(len(idx))
        f = F.evaluate(grid, x, mask, Ti)
        g = kernels.last_true_index(mask)[:, -1]
        return f * x[r, Ti], f * x[:, -1] * (g <= Ti)

    left, right = run_blocks(one, cfg.n, cfg.block, cfg.workers)
    lhs = EstimatorResult.from_samples(left)
    rhs = EstimatorResult.from_samples(right)
    paired = EstimatorResult.from_samples(left - right)
    return make_report(identity_id, lhs, rhs, cfg, {"paired_diff": paired.mean, "paired_stderr": paired.stderr},
                       functional=F.name, rule=repr(T))


def verify_doob(F: CylinderFunctional, T: StoppingRule, cfg: VerifyConfig = VerifyConfig(),
                identity_id: str = "doob") -> IdentityReport:
    """``(Q+ - Q-)[F_T 1{g <= T}]`` against ``E[F_T B_T]``.

    The two one-sided measures are sampled from independent streams; the
    report carries each one-sided estimate and its own ``P``-side partner.
    """
    _check_adapted(F, rule_cap(T))
    plus, ex_p, ok_p = _q_side(Model("w_plus"), F, T, cfg, STREAM_Q, W_PLUS)
    minus, ex_m, ok_m = _q_side(Model("w_minus"), F, T, cfg, STREAM_Q2, W_MINUS)
    lhs = EstimatorResult(plus.mean - minus.mean, math.hypot(plus.stderr, minus.stderr),
                          plus.n, plus.bias_budget + minus.bias_budget)
    rhs = _p_side(Model("w"), F, T, cfg, value="path")
    extras = {
        "plus_mean": plus.mean, "plus_stderr": plus.stderr,
        "minus_mean": minus.mean, "minus_stderr": minus.stderr,
        "R_plus": ex_p["R"], "R_minus": ex_m["R"],
    }
    return make_report(identity_id, lhs, rhs, cfg, extras, ok_p and ok_m, functional=F.name, rule=repr(T))


def verify_nf_density(model, f: IntegrableTestFunction, F: CylinderFunctional, t: float,
                      cfg: VerifyConfig = VerifyConfig(), identity_id: Optional[str] = None) -> IdentityReport:
    """``Q[F_t f(A_inf)]`` against ``E_P[F_t (G(A_t) + f(A_t) X_t)]``."""
    model = _as_model(model)
    if model.uses_race:
        raise ConfigurationError("the drawdown model is compared through its Q sampler only")
    _check_adapted(F, t)
    identity_id = identity_id or f"nf_density[{model}]"
    grid = cfg.grid(t)
    lhs = q_integral(model.q_tag, F, f, None, cfg.n, cfg.seed, grid, cfg.eps, cfg.workers, cfg.block)

    def one(idx):
        b = p_block(model, cfg.seed, STREAM_P, idx, grid, cfg.eps)
        a, x = b["a"][:, -1], b["x"][:, -1]
        return F.evaluate(grid, b["path"], b["mask"], grid.n) * (f.G(a) + f.f(a) * x)

    rhs = EstimatorResult.from_samples(run_blocks(one, cfg.n, cfg.block, cfg.workers))
    if model.name == "bessel":
        rhs = replace(rhs, bias_budget=cfg.bessel_bias * abs(rhs.mean))
    return make_report(identity_id, lhs, rhs, cfg, {"G0": float(f.G(0.0))}, model=str(model),
                       functional=F.name, f=repr(f))


def class_d_tail(u, horizon: float = 1.0):
    """``P[L_horizon > u]`` for Brownian local time, ``2 (1 - Phi(u / sqrt(horizon)))``."""
    return 2.0 * stats.norm.sf(np.asarray(u) / math.sqrt(horizon))


def verify_ainf_image(model: str, f: IntegrableTestFunction, cfg: VerifyConfig = VerifyConfig(),
                      identity_id: Optional[str] = None) -> IdentityReport:
    """``Q[f(A_inf)]`` against ``f(0) E[X_0] + int f(u) P[A_inf > u] du``.

    ``model`` is ``abs_bm`` (the image is Lebesgue measure) or ``class_d``
    (``|B|`` stopped at the horizon, ``Q = X_inf P``).
    """
    identity_id = identity_id or f"ainf_image[{model}]"
    grid = cfg.grid()
    if model == "abs_bm":
        lhs = q_integral(Q_ABS_BM, ONE, f, None, cfg.n, cfg.seed, grid, cfg.eps, cfg.workers, cfg.block)
        rhs = EstimatorResult.exact(float(f.G(0.0)), cfg.n)
    elif model == "class_d":
        lhs = reweight_class_d(lambda b: b["x"][:, -1] * f.f(b["a"][:, -1]), ONE, cfg.n, cfg.seed, grid,
                               cfg.workers, cfg.block)
        upper = f.support_upper
        quad_upper = upper if math.isfinite(upper) else np.inf
        val, err = integrate.quad(lambda u: float(f.f(u)) * float(class_d_tail(u, grid.horizon)),
                                  0.0, quad_upper, limit=200)
        rhs = EstimatorResult.exact(val, cfg.n)
    else:
        raise ConfigurationError(f"A_inf image check supports abs_bm and class_d, not {model!r}")
    return make_report(identity_id, lhs, rhs, cfg, model=model, f=repr(f))


def verify_martingale_constancy(model, f: IntegrableTestFunction, rules: Sequence[StoppingRule],
                                cfg: VerifyConfig = VerifyConfig(), identity_id: Optional[str] = None) -> list:
    """``E_P[M^f_T]`` for each rule against ``M^f_0 = G(0)`` (all models start at zero)."""
    model = _as_model(model)
    identity_id = identity_id or f"mf_constancy[{model}]"
    target = EstimatorResult.exact(float(f.G(0.0)), cfg.n)
    out = []
    horizon = max(rule_cap(r) for r in rules)
    grid = cfg.grid(horizon)

    def one(idx):
        b = p_block(model, cfg.seed, STREAM_P, idx, grid, cfg.eps)
        r = np.arange(len(idx))
        cols = []
        for rule in rules:
            T = stopping_indices(rule, grid, b["x"])
            a, x = b["a"][r, T], b["x"][r, T]
            cols.append(f.G(a) + f.f(a) * x)
        return np.stack(cols, axis=1)

    mf = run_blocks(one, cfg.n, cfg.block, cfg.workers)
    for j, rule in enumerate(rules):
        res = EstimatorResult.from_samples(mf[:, j])
        if model.name == "bessel":
            res = replace(res, bias_budget=cfg.bessel_bias * abs(target.mean))
        out.append(make_report(f"{identity_id}#{j}", res, target, cfg, model=str(model), rule=repr(rule), f=repr(f)))
    return out


# ---------------------------------------------------------------- Azema


def _azema_p_arrays(alpha: float, grid: TimeGrid, cfg: VerifyConfig, idx):
    """Zero mask, ``X_t``, and bracketing values of ``(t - g(t))^alpha`` at the horizon."""
    if alpha == 0.5:
        b = levy_block(cfg.seed, STREAM_P, idx, grid)
        mask = zero_mask(b["x"], 0.0, b["flags"])
        x = b["x"]
        path = b["x"]
        exact_intervals = True
    else:
        model = Model("bessel", 2 * (1 - alpha))
        b = p_block(model, cfg.seed, STREAM_P, idx, grid, cfg.eps)
        mask, x, path = b["mask"], b["x"], b["path"]
        exact_intervals = False
    gi = kernels.last_true_index(mask)[:, -1]
    gi = np.maximum(gi, 0)
    n = grid.n
    lower = (grid.step * (n - gi)) ** alpha
    upper = (grid.step * (n - np.maximum(gi - 1, 0))) ** alpha if exact_intervals else lower
    return mask, x, path, lower, upper


def verify_azema(alpha: float, F: CylinderFunctional, t: float, cfg: VerifyConfig = VerifyConfig(),
                 identity_id: Optional[str] = None) -> IdentityReport:
    """``R[F_t 1{g <= t}]`` against ``2^alpha Gamma(1 + alpha) E_P[F_t (t - g(t))^alpha]``.

    ``R`` is the measure of the Bessel model of dimension ``2 (1 - alpha)``;
    at ``alpha = 1/2`` that is reflected Brownian motion, sampled exactly.
    ``F`` must read the zero set only. The grid places each zero at the
    right end of its interval, so ``(t - g(t))^alpha`` is known to lie between
    two grid values; half their mean gap is added to the bias budget.
    """
    if not (0 < alpha < 1):
        raise ConfigurationError("alpha must lie in (0, 1)")
    if F.measurability != "ZEROS_FILTRATION" and not F.name in ("one", "zero"):
        raise ConfigurationError("the Azema identity takes functionals of the zero set")
    identity_id = identity_id or f"azema[{alpha:g}]"
    _check_adapted(F, t)
    if F.is_zero:
        zero = EstimatorResult(0.0, 0.0, cfg.n)
        return make_report(identity_id, zero, zero, cfg, alpha=alpha, functional=F.name)
    model = Model("abs_bm") if alpha == 0.5 else Model("bessel", 2 * (1 - alpha))
    lhs, extras, certified = _q_side(model, F, Deterministic(t), cfg)
    grid = cfg.grid(t)
    c = azema_constant(alpha)

    def one(idx):
        mask, x, path, lower, upper = _azema_p_arrays(alpha, grid, cfg, idx)
        fv = F.evaluate(grid, path, mask, grid.n)
        return c * fv * lower, c * np.abs(fv) * (upper - lower)

    vals, gaps = run_blocks(one, cfg.n, cfg.block, cfg.workers)
    budget = float(gaps.mean())
    if alpha != 0.5:
        budget += cfg.bessel_bias * abs(float(vals.mean()))
    rhs = EstimatorResult.from_samples(vals, budget)
    extras["constant"] = c
    return make_report(identity_id, lhs, rhs, cfg, extras, certified, alpha=alpha, functional=F.name)


def azema_slope(cfg: VerifyConfig = VerifyConfig(), t: float = 1.0,
                identity_id: str = "azema_slope") -> IdentityReport:
    """Least-squares slope of ``|B_t|`` on ``sqrt(t - g(t))`` through the origin.

    The conditional mean of ``|B_t|`` given the zeros is
    ``sqrt(pi/2) sqrt(t - g(t))``, so the slope estimates ``sqrt(pi/2)``.
    The standard error is heteroskedasticity-robust. Each last zero is
    placed at the midpoint of the grid interval that contains it.
    """
    grid = cfg.grid(t)

    def one(idx):
        b = levy_block(cfg.seed, STREAM_P, idx, grid)
        mask = zero_mask(b["x"], 0.0, b["flags"])
        gi = kernels.last_true_index(mask)[:, -1]
        g = np.where(gi > 0, grid.step * (gi - 0.5), 0.0)
        return np.sqrt(t - g), b["x"][:, -1]

    u, y = run_blocks(one, cfg.n, cfg.block, cfg.workers)
    sxx = float(np.dot(u, u))
    slope = float(np.dot(u, y)) / sxx
    resid = y - slope * u
    se = math.sqrt(float(np.dot(u * u, resid * resid))) / sxx
    lhs = EstimatorResult(slope, se, len(u))
    rhs = EstimatorResult.exact(math.sqrt(math.pi / 2), len(u))
    return make_report(identity_id, lhs, rhs, cfg)
