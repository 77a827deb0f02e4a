from __future__ import annotations

import math

import pytest
from hypothesis import given, strategies as st

from sigmaq import (
    FAIL,
    INCONCLUSIVE,
    ONE,
    PASS,
    ZERO,
    ConfigurationError,
    Deterministic,
    EstimatorResult,
    Exponential,
    HittingLevel,
    IndicatorInterval,
    PiecewiseConstant,
    VerifyConfig,
    indicator_abs_le,
    indicator_positive,
    sign_at,
    verify_ainf_image,
    verify_azema,
    verify_class_d,
    verify_doob,
    verify_martingale_constancy,
    verify_master,
    verify_nf_density,
    verify_stopping,
)
from sigmaq.estimators import CylinderFunctional, FULL_FILTRATION
from sigmaq.verify import class_d_tail, decide, z_score

from _oracles import CLASS_D_TAIL, INV_SQRT_2PI, SQRT_1_OVER_PI

FAST = VerifyConfig(n=4000, step=2.0 ** -6, pilot_n=2000, q_oversample=1, seed=7)

finite = st.floats(-10, 10, allow_nan=False)
ses = st.floats(0, 2, allow_nan=False)


# ---------------------------------------------------------------- decisions


def test_estimator_result_from_samples():
    r = EstimatorResult.from_samples([1.0, 2.0, 3.0, 4.0])
    assert r.mean == 2.5 and r.n == 4
    assert r.stderr == pytest.approx(math.sqrt(5 / 3) / 2)
    with pytest.raises(ValueError):
        EstimatorResult.from_samples([1.0])


def test_z_score_degenerate_cases():
    e = EstimatorResult.exact
    assert z_score(e(1.0), e(1.0)) == 0.0
    assert z_score(e(1.0), e(0.0)) == math.inf
    assert z_score(e(0.0), e(1.0)) == -math.inf


@given(finite, ses, finite, ses, st.floats(0, 1), st.floats(0.5, 6))
def test_decision_rule(m1, s1, m2, s2, budget, zc):
    lhs, rhs = EstimatorResult(m1, s1, 10), EstimatorResult(m2, s2, 10)
    z, v = decide(lhs, rhs, zc, budget)
    pooled = math.hypot(s1, s2)
    if v == PASS:
        assert abs(z) <= zc
    elif v == INCONCLUSIVE:
        assert abs(z) > zc and abs(m1 - m2) <= budget + zc * pooled
    else:
        assert v == FAIL and abs(m1 - m2) > budget + zc * pooled
    assert decide(lhs, rhs, zc, budget) == (z, v)
    assert decide(lhs, rhs, zc, budget, certified=False)[1] == INCONCLUSIVE


def test_config_validation():
    with pytest.raises(ConfigurationError):
        VerifyConfig(n=1)
    with pytest.raises(ConfigurationError):
        VerifyConfig(step=0.0)


# ---------------------------------------------------------------- trivial instances


@pytest.mark.parametrize("model", ["abs_bm", "w_plus", "w_minus", "drawdown", "bessel(1)"])
def test_master_with_zero_functional(model):
    r = verify_master(model, ZERO, 1.0, FAST)
    assert r.lhs.mean == r.rhs.mean == 0.0 and r.verdict == PASS


def test_stopping_at_time_zero_is_trivial():
    r = verify_stopping("abs_bm", ONE, Deterministic(0.0), FAST)
    assert r.lhs.mean == r.rhs.mean == 0.0 and r.verdict == PASS


def test_stopping_deterministic_reduces_to_master():
    a = verify_master("abs_bm", ONE, 0.5, FAST)
    b = verify_stopping("abs_bm", ONE, Deterministic(0.5), FAST, identity_id="master[abs_bm]")
    assert (a.lhs, a.rhs, a.z, a.verdict) == (b.lhs, b.rhs, b.z, b.verdict)


def test_functional_past_horizon_is_rejected():
    with pytest.raises(ConfigurationError):
        verify_master("abs_bm", indicator_positive(2.0), 1.0, FAST)


def test_functional_bound_enforced():
    bad = CylinderFunctional((0.5,), lambda v, r, z: 2.0 * v[:, 0] + 5.0, 1.0, FULL_FILTRATION, "bad")
    with pytest.raises(ValueError):
        verify_master("abs_bm", bad, 1.0, FAST)


def test_class_d_trivial_and_half():
    assert verify_class_d(ZERO, Deterministic(1.0), FAST).lhs.mean == 0.0
    r = verify_class_d(ONE, Deterministic(0.5), VerifyConfig(n=20_000, step=2.0 ** -8))
    assert r.verdict == PASS
    assert abs(r.lhs.mean - SQRT_1_OVER_PI) <= 3 * r.lhs.stderr


def test_doob_sign_symmetry_and_positive_part():
    cfg = VerifyConfig(n=10_000, step=2.0 ** -6, pilot_n=2000, q_oversample=2, seed=3)
    r = verify_doob(sign_at(1.0), Deterministic(1.0), cfg)
    assert r.verdict == PASS
    r = verify_doob(indicator_positive(1.0), Deterministic(1.0), cfg)
    assert r.verdict == PASS
    assert abs(r.rhs.mean - INV_SQRT_2PI) <= 3 * r.rhs.stderr


def test_nf_density_indicator_weight():
    cfg = VerifyConfig(n=20_000, step=2.0 ** -8, seed=4)
    r = verify_nf_density("abs_bm", IndicatorInterval(1.0), ONE, 1.0, cfg)
    assert r.lhs.mean == 1.0 and r.lhs.stderr == 0.0
    assert r.verdict == PASS
    assert verify_nf_density("abs_bm", Exponential(1.0), ZERO, 1.0, FAST).rhs.mean == 0.0


def test_ainf_image_zero_function():
    zero = PiecewiseConstant((0.0,), ())
    for model in ("abs_bm", "class_d"):
        r = verify_ainf_image(model, zero, FAST)
        assert r.lhs.mean == r.rhs.mean == 0.0 and r.verdict == PASS


def test_class_d_tail_quadrature():
    from scipy import integrate

    v = integrate.quad(lambda u: float(class_d_tail(u)), 0, 1)[0]
    assert v == pytest.approx(CLASS_D_TAIL, rel=1e-10)


def test_constancy_zero_function():
    zero = PiecewiseConstant((0.0,), ())
    reports = verify_martingale_constancy("abs_bm", zero, [Deterministic(0.25), Deterministic(1.0)], FAST)
    assert [r.lhs.mean for r in reports] == [0.0, 0.0]


def test_constancy_drawdown_and_hitting():
    cfg = VerifyConfig(n=20_000, step=2.0 ** -8, seed=5)
    rules = [Deterministic(1.0), HittingLevel(1.0, 1.0)]
    for r in verify_martingale_constancy("drawdown", Exponential(1.0), rules, cfg):
        assert r.verdict == PASS


def test_azema_zero_functional():
    r = verify_azema(0.5, ZERO, 1.0, FAST)
    assert r.lhs.mean == r.rhs.mean == 0.0 and r.verdict == PASS


def test_azema_rejects_full_filtration():
    with pytest.raises(ConfigurationError):
        verify_azema(0.5, indicator_abs_le(0.5, 0.5), 1.0, FAST)


# ---------------------------------------------------------------- reproducibility


def test_reports_are_reproducible():
    a = verify_master("w_minus", ONE, 1.0, FAST)
    b = verify_master("w_minus", ONE, 1.0, FAST)
    assert (a.lhs, a.rhs, a.z, a.bias_budget) == (b.lhs, b.rhs, b.z, b.bias_budget)


def test_workers_do_not_change_results():
    from dataclasses import replace

    a = verify_master("abs_bm", ONE, 1.0, replace(FAST, block=512))
    b = verify_master("abs_bm", ONE, 1.0, replace(FAST, block=512, workers=3))
    assert (a.lhs, a.rhs, a.z) == (b.lhs, b.rhs, b.z)


def test_mutation_is_detected_at_small_n():
    from dataclasses import replace

    cfg = replace(FAST, n=20_000)
    r = verify_master("abs_bm", ONE, 1.0, replace(cfg, drop_indicator=True))
    assert r.verdict != PASS and abs(r.z) > 4
