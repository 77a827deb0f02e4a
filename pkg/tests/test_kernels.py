"""The numba loops and their numpy twins must agree on the same inputs."""

from __future__ import annotations

import json
import os
import subprocess
import sys

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from sigmaq import kernels
from sigmaq._jit import USE_NUMBA

seeds = st.integers(0, 2 ** 31)


def _walks(seed, rows=5, n=64, step=2.0 ** -6):
    rng = np.random.default_rng(seed)
    w = np.concatenate([np.zeros((rows, 1)), np.cumsum(rng.standard_normal((rows, n)) * np.sqrt(step), axis=1)], 1)
    u = 1.0 - rng.random((rows, n))
    return rng, w, kernels.bridge_max(w[:, :-1], w[:, 1:], step, u), step


@settings(max_examples=30, deadline=None)
@given(seeds)
def test_running_max(seed):
    _, w, hi, _ = _walks(seed)
    s1, f1 = kernels._running_max_loop(w, hi)
    s2, f2 = kernels._running_max_np(w, hi)
    assert np.array_equal(s1, s2) and np.array_equal(f1, f2)
    assert np.all(np.diff(s1, axis=1) >= 0) and np.all(s1 >= w)


@settings(max_examples=30, deadline=None)
@given(seeds)
def test_last_true_and_signs(seed):
    rng, w, hi, _ = _walks(seed)
    mask = rng.random((5, 65)) < 0.1
    assert np.array_equal(kernels._last_true_loop(mask), kernels._last_true_np(mask))
    flags = rng.random((5, 64)) < 0.2
    coins = rng.random((5, 64)) < 0.5
    a = kernels._excursion_signs_loop(flags, coins)
    b = kernels._excursion_signs_np(flags, coins)
    assert np.array_equal(a, b)
    assert set(np.unique(a)) <= {-1.0, 1.0}


@settings(max_examples=20, deadline=None)
@given(seeds)
def test_bes3(seed):
    rng = np.random.default_rng(seed)
    z = rng.standard_normal((4, 50, 3))
    y0 = rng.random(4)
    a = kernels._bes3_loop(y0, z, 0.01)
    b = kernels._bes3_np(y0, z, 0.01)
    np.testing.assert_allclose(a, b, rtol=1e-12, atol=1e-14)
    assert np.all(a[:, 1:] > 0)


@settings(max_examples=20, deadline=None)
@given(seeds, st.floats(0.001, 0.1))
def test_occupation(seed, eps):
    _, w, _, step = _walks(seed)
    np.testing.assert_allclose(kernels._occupation_loop(w, eps, step), kernels._occupation_np(w, eps, step),
                               rtol=1e-12, atol=1e-15)


@settings(max_examples=30, deadline=None)
@given(seeds, st.floats(-0.5, 0.5), st.booleans())
def test_first_hit(seed, level, use_bridge):
    rng, w, hi, step = _walks(seed)
    lo = kernels.bridge_min(w[:, :-1], w[:, 1:], step, 1.0 - rng.random(hi.shape))
    cap = int(rng.integers(1, w.shape[1]))
    a = kernels._first_hit_loop(w, level, lo, hi, use_bridge, cap)
    b = kernels._first_hit_np(w, level, lo, hi, use_bridge, cap)
    assert np.array_equal(a, b)


def test_loops_run_uncompiled():
    # the interpreted loop is what the fallback executes for the Bessel kernel
    u = 1.0 - np.random.default_rng(1).random(2000)
    f = getattr(kernels.besq_path_loop, "py_func", kernels.besq_path_loop)
    v1, k1 = f(0.0, 1.0, 0.01, 100, u)
    v2, k2 = kernels.besq_path_loop(0.0, 1.0, 0.01, 100, u)
    assert k1 == k2
    np.testing.assert_allclose(v1, v2, rtol=1e-12)


_SNIPPET = """
import json
from sigmaq import ONE, VerifyConfig, verify_master, price_report, PutSpec
from sigmaq._jit import USE_NUMBA
cfg = VerifyConfig(n=2000, step=2.0 ** -6, pilot_n=1000, q_oversample=1, seed=3)
r = verify_master("w_minus", ONE, 1.0, cfg)
d = verify_master("drawdown", ONE, 1.0, cfg)
b = verify_master("bessel(1)", ONE, 1.0, cfg)
p = price_report(PutSpec(1.0, 1.0, T_max=2.0), 2000, 4)[0]
print(json.dumps({"numba": USE_NUMBA, "vals": [x.lhs.mean for x in (r, d, b, p)] + [x.rhs.mean for x in (r, d, b, p)]}))
"""


def _run(disable):
    env = dict(os.environ)
    env.pop("SIGMAQ_DISABLE_NUMBA", None)
    if disable:
        env["SIGMAQ_DISABLE_NUMBA"] = "1"
    out = subprocess.run([sys.executable, "-c", _SNIPPET], env=env, capture_output=True, text=True, check=True)
    return json.loads(out.stdout)


@pytest.mark.skipif(not USE_NUMBA, reason="numba backend not active")
def test_backends_agree_end_to_end():
    fast, slow = _run(False), _run(True)
    assert fast["numba"] and not slow["numba"]
    np.testing.assert_allclose(fast["vals"], slow["vals"], rtol=1e-10, atol=1e-13)
