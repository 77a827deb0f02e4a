"""Acceptance suite: twelve criteria at full sample size.

Each test records one ``criterion N: PASS|FAIL ...`` line; the lines are
printed together in the terminal summary. Run with ``pytest -m slow`` to
select only these.
"""

from __future__ import annotations

import math
from dataclasses import replace

import numpy as np
import pytest

from sigmaq import (
    ONE,
    BudgetExhausted,
    Deterministic,
    Exponential,
    HittingLevel,
    IndicatorInterval,
    PutSpec,
    Q_ABS_BM,
    Q_BESSEL,
    TimeGrid,
    VerifyConfig,
    W,
    W_MINUS,
    W_PLUS,
    azema_projection,
    azema_slope,
    build_abs_bm_levy,
    build_bessel_scale,
    build_drawdown,
    build_positive_part,
    indicator_abs_le,
    indicator_positive,
    last_passage_cdf,
    last_zero,
    price_report,
    q_integral,
    sample_azema_image,
    sample_q_spliced,
    simulate_bessel,
    simulate_bm,
    simulate_exp_martingale,
    verify_ainf_image,
    verify_azema,
    verify_class_d,
    verify_doob,
    verify_martingale_constancy,
    verify_master,
    verify_nf_density,
    verify_stopping,
)
from sigmaq.cli import emit
from sigmaq.functionals import azema_constant

from _oracles import (
    CLASS_D_TAIL,
    INV_SQRT_2PI,
    PUT_ATM_T1,
    PUT_ATM_T4,
    SQRT_1_OVER_PI,
    SQRT_2_OVER_PI,
    SQRT_PI_OVER_2,
)
from _stats import ACCEPTANCE_LINES

pytestmark = pytest.mark.slow

CFG = VerifyConfig()  # n = 10^5, step 2^-10
SEEDS = 10_000


def record(number, checks):
    """Record and print the criterion line, then assert every check."""
    ok = all(c for _, c in checks)
    failed = [name for name, c in checks if not c]
    detail = "; ".join(name for name, _ in checks) if ok else "failed: " + "; ".join(failed)
    line = f"criterion {number}: {'PASS' if ok else 'FAIL'} ({detail})"
    ACCEPTANCE_LINES.append(line)
    print(line)
    assert ok, line


def near(res, target, k=3.0):
    return abs(res.mean - target) <= k * res.stderr


def paired_z(report):
    return report.extras["paired_diff"] / report.extras["paired_stderr"]


def test_criterion_01_master_identity_abs_bm():
    r = verify_master("abs_bm", ONE, 1.0, CFG)
    rf = verify_master("abs_bm", indicator_abs_le(0.5, 0.5), 1.0, CFG)
    record(1, [
        (f"F=1 z={r.z:.2f}", abs(r.z) <= 4),
        (f"lhs={r.lhs.mean:.5f} rhs={r.rhs.mean:.5f} vs {SQRT_2_OVER_PI:.5f}",
         abs(r.lhs.mean - SQRT_2_OVER_PI) < 0.01 and abs(r.rhs.mean - SQRT_2_OVER_PI) < 0.01),
        (f"indicator z={rf.z:.2f}", abs(rf.z) <= 4),
    ])


def test_criterion_02_bounded_stopping_time():
    r = verify_stopping("abs_bm", ONE, HittingLevel(1.0, 1.0), CFG)
    record(2, [(f"z={r.z:.2f} lhs={r.lhs.mean:.5f} rhs={r.rhs.mean:.5f}", abs(r.z) <= 4)])


def test_criterion_03_class_d_projection():
    r = verify_class_d(ONE, Deterministic(0.5), CFG)
    pz = paired_z(r)
    record(3, [
        (f"lhs={r.lhs.mean:.5f}", near(r.lhs, SQRT_1_OVER_PI)),
        (f"rhs={r.rhs.mean:.5f}", near(r.rhs, SQRT_1_OVER_PI)),
        (f"paired z={pz:.2f}", abs(pz) <= 4),
    ])


def test_criterion_04_doob_extension():
    r = verify_doob(ONE, Deterministic(1.0), CFG)
    ex = r.extras
    record(4, [
        (f"Q+={ex['plus_mean']:.5f}", abs(ex["plus_mean"] - INV_SQRT_2PI) <= 3 * ex["plus_stderr"]),
        (f"Q-={ex['minus_mean']:.5f}", abs(ex["minus_mean"] - INV_SQRT_2PI) <= 3 * ex["minus_stderr"]),
        (f"diff={r.lhs.mean:.5f}", abs(r.lhs.mean) <= 3 * r.lhs.stderr),
    ])


def test_criterion_05_nf_density():
    r = verify_nf_density("abs_bm", Exponential(1.0), ONE, 1.0, CFG)
    record(5, [
        (f"Q side={r.lhs.mean:.5f}", near(r.lhs, 1.0)),
        (f"P side={r.rhs.mean:.5f}", near(r.rhs, 1.0)),
    ])


def test_criterion_06_ainf_image():
    a = verify_ainf_image("abs_bm", IndicatorInterval(1.0), CFG)
    b = verify_ainf_image("class_d", IndicatorInterval(1.0), CFG)
    record(6, [
        (f"abs_bm Q[f(A_inf)]={a.lhs.mean:.5f}", near(a.lhs, 1.0)),
        (f"class_d Q[f(A_inf)]={b.lhs.mean:.5f}", near(b.lhs, CLASS_D_TAIL)),
        (f"quadrature={b.rhs.mean:.6f}", abs(b.rhs.mean - CLASS_D_TAIL) < 1e-8),
    ])


def test_criterion_07_mf_martingale():
    rules = [Deterministic(0.25), Deterministic(1.0), HittingLevel(1.0, 1.0)]
    checks = []
    for model in ("abs_bm", "drawdown"):
        for rule, r in zip(("0.25", "1", "hit"), verify_martingale_constancy(model, Exponential(1.0), rules, CFG)):
            checks.append((f"{model}@{rule}={r.lhs.mean:.4f}", near(r.lhs, 1.0)))
    record(7, checks)


def test_criterion_08_drawdown_master():
    r = verify_master("drawdown", ONE, 1.0, CFG)
    record(8, [
        (f"z={r.z:.2f}", abs(r.z) <= 4),
        (f"lhs={r.lhs.mean:.5f} rhs={r.rhs.mean:.5f}",
         abs(r.lhs.mean - SQRT_2_OVER_PI) < 0.01 and abs(r.rhs.mean - SQRT_2_OVER_PI) < 0.01),
    ])


def test_criterion_09_azema():
    r = verify_azema(0.5, ONE, 1.0, CFG)
    s = azema_slope(CFG)
    record(9, [
        (f"verdict={r.verdict} z={r.z:.2f} lhs={r.lhs.mean:.5f} rhs={r.rhs.mean:.5f}", r.verdict == "PASS"),
        (f"slope={s.lhs.mean:.5f}+-{s.lhs.stderr:.5f}", near(s.lhs, SQRT_PI_OVER_2)),
    ])


def test_criterion_10_last_passage_pricing():
    spec = PutSpec(1.0, 1.0, T_max=8.0)
    reps = price_report(spec, CFG.n, seed=CFG.seed)
    put, lp = reps[0].lhs, reps[0].rhs
    times = [0.25, 0.5, 1.0, 2.0, 4.0]
    curve = last_passage_cdf(spec, 20_000, seed=CFG.seed + 1, times=times)
    means = [c.mean for c in curve]
    a = last_passage_cdf(PutSpec(1.0, 1.0, T_max=8.0), CFG.n, seed=CFG.seed + 2)
    b = last_passage_cdf(PutSpec(1.0, 1.0, T_max=16.0), CFG.n, seed=CFG.seed + 3)
    t4 = last_passage_cdf(PutSpec(1.0, 4.0, T_max=8.0), CFG.n, seed=CFG.seed + 4)
    record(10, [
        (f"put={put.mean:.5f}", near(put, PUT_ATM_T1)),
        (f"last passage={lp.mean:.5f}", near(lp, PUT_ATM_T1)),
        (f"closed form={reps[1].rhs.mean:.5f}", abs(reps[1].rhs.mean - PUT_ATM_T1) < 1e-12),
        (f"put vs last passage z={reps[0].z:.2f}", abs(reps[0].lhs.mean - reps[0].rhs.mean) <= 3 * reps[0].pooled_stderr),
        ("monotone in t", means == sorted(means)),
        (f"T_max 8 vs 16 diff={a.mean - b.mean:.5f}", abs(a.mean - b.mean) <= 3 * math.hypot(a.stderr, b.stderr)),
        (f"t=4 {t4.mean:.5f}", near(t4, PUT_ATM_T4)),
    ])


# ---------------------------------------------------------------- structural


def _constructions(seed, g):
    bm = simulate_bm(seed, g)
    lev = build_abs_bm_levy(seed, g)
    out = [lev, build_drawdown(bm), build_drawdown(simulate_exp_martingale(seed, g, 1.0)),
           build_positive_part(bm, 0.01), azema_projection(lev, 0.5)]
    for d in (0.5, 1.0, 1.5):
        bs = build_bessel_scale(simulate_bessel(seed, g, d), 1 - d / 2, 0.01)
        out += [bs, azema_projection(bs, 1 - d / 2)]
    return out


def _spliced(seed, g):
    l = 0.01 + 0.99 * np.random.default_rng(seed).random()
    out = []
    for tag in (Q_ABS_BM, W, W_PLUS, W_MINUS, Q_BESSEL(0.5), Q_BESSEL(1.0), Q_BESSEL(1.5)):
        try:
            out.append((tag, l, sample_q_spliced(tag, l, seed, g, post_horizon=0.25)))
        except BudgetExhausted:
            out.append((tag, l, None))
    for alpha in (0.5, 0.25):
        try:
            # the projected A is measured in base local time divided by the Azema constant
            ws = sample_azema_image(alpha, l, seed, g, post_horizon=0.25)
            out.append((f"azema({alpha})", l / azema_constant(alpha), ws))
        except BudgetExhausted:
            out.append((f"azema({alpha})", l, None))
    return out


def test_criterion_11_structural():
    g = TimeGrid.from_horizon(2.0 ** -8, 1.0)
    gs = TimeGrid.from_horizon(2.0 ** -8, 0.5)
    bad_zero, bad_splice, exhausted, total = [], [], 0, 0
    for seed in range(SEEDS):
        for s in _constructions(seed, g):
            total += 1
            if not s.carried_on_zeros():
                bad_zero.append((s.model_tag, seed))
        for tag, l, ws in _spliced(seed, gs):
            if ws is None:
                exhausted += 1
                continue
            s = ws.sigma
            total += 1
            if not s.carried_on_zeros():
                bad_zero.append((str(tag), seed))
            if s.a[-1] != l or last_zero(s, s.grid.horizon) != ws.splice_time:
                bad_splice.append((str(tag), seed))

    cg = TimeGrid.from_horizon(2.0 ** -6, 1.0)
    H, h = indicator_positive(1.0), Exponential(1.0)
    w = q_integral(W, H, h, n=CFG.n, seed=11, grid=cg)
    p = q_integral(W_PLUS, H, h, n=CFG.n, seed=12, grid=cg)
    m = q_integral(W_MINUS, H, h, n=CFG.n, seed=13, grid=cg)
    add_se = math.sqrt(w.stderr ** 2 + p.stderr ** 2 + m.stderr ** 2)

    small = replace(CFG, n=20_000)
    runs = [emit([verify_master("w_minus", ONE, 1.0, replace(small, workers=k))], "csv") for k in (1, 1, 3)]
    record(11, [
        (f"carried on zeros {total - len(bad_zero)}/{total} paths", not bad_zero),
        (f"splicing exact ({exhausted} budget exhaustions skipped)", not bad_splice),
        (f"W={w.mean:.4f} W+ + W-={p.mean + m.mean:.4f}", abs(w.mean - p.mean - m.mean) <= 3 * add_se),
        ("bitwise identical across runs and thread counts", runs[0] == runs[1] == runs[2]),
    ])


def test_criterion_12_mutation_power():
    r = verify_master("abs_bm", ONE, 1.0, replace(CFG, drop_indicator=True))
    record(12, [(f"mutated z={r.z:.1f}", abs(r.z) > 10)])
