from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, reject, settings, strategies as st
from scipy import integrate

from sigmaq import (
    ONE,
    ZERO,
    BudgetExhausted,
    ConfigurationError,
    Exponential,
    IndicatorInterval,
    LevelProposal,
    PiecewiseConstant,
    Q_ABS_BM,
    Q_BESSEL,
    S_AZEMA,
    TimeGrid,
    W,
    W_MINUS,
    W_PLUS,
    bs_measure_expectation,
    indicator_last_zero_le,
    indicator_positive,
    last_zero,
    parse_tag,
    q_integral,
    reweight_class_d,
    sample_azema_image,
    sample_q_spliced,
)

from _oracles import SQRT_2_OVER_PI, SQRT_PI_OVER_2
from _stats import within

SPLICED = [Q_ABS_BM, W, W_PLUS, W_MINUS, Q_BESSEL(0.5), Q_BESSEL(1.0), Q_BESSEL(1.5)]


@pytest.fixture(scope="module")
def small():
    return TimeGrid.from_horizon(2.0 ** -8, 0.5)


# ---------------------------------------------------------------- tags and proposals


def test_tag_parsing_round_trip():
    for tag in SPLICED + [S_AZEMA(0.25)]:
        assert parse_tag(str(tag)) == tag
    with pytest.raises(ConfigurationError):
        parse_tag("Q_BESSEL(2.5)")
    with pytest.raises(ConfigurationError):
        parse_tag("NOPE")


def test_tag_weights():
    assert W.weight == 2.0 and W_PLUS.weight == 1.0
    assert S_AZEMA(0.5).weight == pytest.approx(1 / SQRT_PI_OVER_2, rel=1e-15)
    assert S_AZEMA(0.5).weight == pytest.approx(SQRT_2_OVER_PI, rel=1e-15)


@pytest.mark.parametrize("p", [LevelProposal.exponential(0.7), LevelProposal.uniform(2.5)])
def test_proposal_is_a_density(p):
    mass = integrate.quad(lambda l: float(p.pdf(l)), 0, 2.5 if p.kind == "uniform" else 200, limit=200)[0]
    assert mass == pytest.approx(1.0, abs=1e-8)
    u = np.linspace(1e-6, 1.0, 101)
    assert np.all(p.pdf(p.from_uniform(u)) > 0)


def test_default_proposal_and_coverage():
    assert LevelProposal.default_for(IndicatorInterval(2.0)) == LevelProposal.uniform(2.0)
    assert LevelProposal.default_for(Exponential(3.0)) == LevelProposal.exponential(1.0)
    with pytest.raises(ConfigurationError):
        q_integral(Q_ABS_BM, ONE, IndicatorInterval(2.0), LevelProposal.uniform(1.0), n=10)
    with pytest.raises(ConfigurationError):
        q_integral(Q_ABS_BM, ONE, Exponential(1.0), LevelProposal.uniform(1.0), n=10)


# ---------------------------------------------------------------- single spliced samples


@settings(max_examples=25, deadline=None)
@given(st.sampled_from(SPLICED), st.floats(0.01, 1.0), st.integers(0, 10 ** 6))
def test_splicing_is_exact(tag, l, seed):
    g = TimeGrid.from_horizon(2.0 ** -8, 0.5)
    try:
        ws = sample_q_spliced(tag, l, seed, g, post_horizon=0.25)
    except BudgetExhausted:
        # tau_l has a heavy tail; exhausting the budget is the documented outcome
        reject()
    s = ws.sigma
    k = s.meta["splice_index"]
    assert s.a[-1] == l
    assert np.all(s.a[k:] == l) and np.all(s.a[:k] <= l)
    assert last_zero(s, s.grid.horizon) == ws.splice_time
    assert np.all(s.x[k + 1:] > 0)
    assert ws.weight == tag.weight
    assert s.carried_on_zeros()


@pytest.mark.parametrize("tag,sign", [(W_PLUS, 1), (W_MINUS, -1)])
def test_signed_post_splice_support(tag, sign, small):
    for seed in range(50):
        try:
            ws = sample_q_spliced(tag, 0.2, seed, small, 0.25)
        except BudgetExhausted:
            continue
        k = ws.sigma.meta["splice_index"]
        assert np.all(sign * ws.path.values[k + 1:] > 0)


def test_w_branches_are_fair(small):
    signs = [sample_q_spliced(W, 0.01, s, small, 0.125).path.meta["branch"] for s in range(400)]
    assert abs(np.mean(signs)) < 3 / math.sqrt(400)


def test_budget_exhausted_is_raised(small):
    with pytest.raises(BudgetExhausted):
        sample_q_spliced(Q_ABS_BM, 50.0, 1, small, 0.1, budget=2.0)


def test_spliced_rejects_bad_input(small):
    with pytest.raises(ConfigurationError):
        sample_q_spliced(Q_ABS_BM, 0.0, 1, small, 0.1)
    with pytest.raises(ConfigurationError):
        sample_q_spliced(S_AZEMA(0.5), 0.5, 1, small, 0.1)


def test_spliced_determinism(small):
    a = sample_q_spliced(W, 0.3, 17, small, 0.25)
    b = sample_q_spliced(W, 0.3, 17, small, 0.25)
    assert a.path.values.tobytes() == b.path.values.tobytes()


@pytest.mark.parametrize("alpha", [0.5, 0.25])
def test_azema_image_sample(alpha, small):
    ws = sample_azema_image(alpha, 0.3, 5, small, post_horizon=0.25)
    k = ws.sigma.meta["splice_index"]
    v = ws.path.values
    assert v[k] == 0.0
    u = small.step * np.arange(1, len(v) - k)
    assert np.allclose(v[k + 1:], u ** alpha, rtol=1e-14)
    assert ws.weight == pytest.approx(1 / (2 ** alpha * math.gamma(1 + alpha)))


# ---------------------------------------------------------------- integrals


@pytest.mark.parametrize("h", [IndicatorInterval(1.0), Exponential(1.0), Exponential(3.0),
                               PiecewiseConstant((0.0, 0.5, 2.0), (1.0, 0.25))])
def test_lebesgue_image_of_a_inf(h):
    g = TimeGrid.from_horizon(2.0 ** -6, 1.0)
    r = q_integral(Q_ABS_BM, ONE, h, n=20_000, seed=3, grid=g)
    assert within(r, h.mass, slack=1e-12)


def test_q_integral_of_zero_is_exact():
    r = q_integral(Q_ABS_BM, ZERO, Exponential(1.0), n=1000)
    assert r.mean == 0.0 and r.stderr == 0.0


def test_q_integral_indicator_is_finite(coarse):
    r = q_integral(Q_ABS_BM, indicator_last_zero_le(0.5), Exponential(1.0), n=5000, grid=coarse)
    assert math.isfinite(r.mean) and math.isfinite(r.stderr) and r.stderr > 0


def test_w_is_sum_of_signed_measures(coarse):
    H = indicator_positive(1.0)
    h = Exponential(1.0)
    w = q_integral(W, H, h, n=40_000, seed=4, grid=coarse)
    p = q_integral(W_PLUS, H, h, n=40_000, seed=5, grid=coarse)
    m = q_integral(W_MINUS, H, h, n=40_000, seed=6, grid=coarse)
    se = math.sqrt(w.stderr ** 2 + p.stderr ** 2 + m.stderr ** 2)
    assert abs(w.mean - (p.mean + m.mean)) <= 3 * se


def test_q_integral_thread_independent(coarse):
    a = q_integral(W, ONE, Exponential(1.0), n=5000, seed=9, grid=coarse, block=512, workers=1)
    b = q_integral(W, ONE, Exponential(1.0), n=5000, seed=9, grid=coarse, block=512, workers=3)
    assert a == b


def test_reweight_class_d():
    g = TimeGrid.from_horizon(2.0 ** -8, 1.0)
    r = reweight_class_d(n=50_000, seed=2, grid=g)
    assert within(r, SQRT_2_OVER_PI)
    r2 = reweight_class_d(H=indicator_last_zero_le(1.0), n=50_000, seed=2, grid=g)
    assert r2 == r
    assert reweight_class_d(H=ZERO, n=10).mean == 0.0


def test_bs_measure_expectation():
    assert bs_measure_expectation(2.0, ONE, n=100).mean == 2.0
    assert bs_measure_expectation(0.0, ONE, n=100).mean == 0.0
    with pytest.raises(ConfigurationError):
        bs_measure_expectation(-1.0, ONE, n=100)
