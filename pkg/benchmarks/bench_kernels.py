"""Compare the numba kernels against their pure-numpy twins.

Usage::

    python benchmarks/bench_kernels.py            # kernel table and end-to-end run
    python benchmarks/bench_kernels.py --skip-e2e # kernel table only

Each kernel is timed on one simulation block (2048 paths, 1024 steps). The
end-to-end section runs the same identity check in two subprocesses, with
and without ``SIGMAQ_DISABLE_NUMBA=1``, and reports wall time for each.
"""

from __future__ import annotations

import argparse
import json
import os
import subprocess
import sys
import time

import numpy as np

from sigmaq import kernels
from sigmaq._jit import USE_NUMBA

ROWS, STEPS = 2048, 1024
STEP = 1.0 / STEPS


def best_of(fn, repeat):
    fn()  # warm-up, includes compilation for the jitted side
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def kernel_cases(rng):
    z = rng.standard_normal((ROWS, STEPS)) * np.sqrt(STEP)
    w = np.concatenate([np.zeros((ROWS, 1)), np.cumsum(z, axis=1)], axis=1)
    hi = kernels.bridge_max(w[:, :-1], w[:, 1:], STEP, 1.0 - rng.random((ROWS, STEPS)))
    lo = kernels.bridge_min(w[:, :-1], w[:, 1:], STEP, 1.0 - rng.random((ROWS, STEPS)))
    mask = rng.random((ROWS, STEPS + 1)) < 0.05
    flags = rng.random((ROWS, STEPS)) < 0.05
    coins = rng.random((ROWS, STEPS)) < 0.5
    y0 = rng.random(ROWS)
    z3 = rng.standard_normal((ROWS, STEPS, 3))
    u = 1.0 - rng.random(64 * STEPS)
    bessel = getattr(kernels.besq_path_loop, "py_func", kernels.besq_path_loop)
    return [
        ("running_max", lambda: kernels._running_max_loop(w, hi), lambda: kernels._running_max_np(w, hi)),
        ("last_true", lambda: kernels._last_true_loop(mask), lambda: kernels._last_true_np(mask)),
        ("excursion_signs", lambda: kernels._excursion_signs_loop(flags, coins),
         lambda: kernels._excursion_signs_np(flags, coins)),
        ("bes3", lambda: kernels._bes3_loop(y0, z3, STEP), lambda: kernels._bes3_np(y0, z3, STEP)),
        ("occupation", lambda: kernels._occupation_loop(w, 0.01, STEP),
         lambda: kernels._occupation_np(w, 0.01, STEP)),
        ("first_hit", lambda: kernels._first_hit_loop(w, 0.5, lo, hi, True, STEPS),
         lambda: kernels._first_hit_np(w, 0.5, lo, hi, True, STEPS)),
        # the squared Bessel sampler has no vectorised twin; the fallback runs the loop uninterpreted
        ("besq_path (1 path)", lambda: kernels.besq_path_loop(0.0, 1.0, STEP, STEPS, u),
         lambda: bessel(0.0, 1.0, STEP, STEPS, u)),
    ]


_E2E = """
import json, time
from sigmaq import ONE, VerifyConfig, verify_master
from sigmaq._jit import USE_NUMBA
cfg = VerifyConfig(n={n}, step=2.0 ** -8, seed=1)
verify_master("abs_bm", ONE, 1.0, VerifyConfig(n=2048, step=2.0 ** -6, seed=1))
t0 = time.perf_counter()
out = {{}}
for model in ("abs_bm", "drawdown", "bessel(1)"):
    t = time.perf_counter()
    r = verify_master(model, ONE, 1.0, cfg)
    out[model] = [time.perf_counter() - t, r.lhs.mean, r.rhs.mean]
print(json.dumps({{"numba": USE_NUMBA, "runs": out}}))
"""


def end_to_end(n):
    res = {}
    for disable in (False, True):
        env = dict(os.environ)
        env.pop("SIGMAQ_DISABLE_NUMBA", None)
        if disable:
            env["SIGMAQ_DISABLE_NUMBA"] = "1"
        p = subprocess.run([sys.executable, "-c", _E2E.format(n=n)], env=env, capture_output=True,
                           text=True, check=True)
        res["numpy" if disable else "numba"] = json.loads(p.stdout)["runs"]
    return res


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--n", type=int, default=20_000, help="samples for the end-to-end run")
    ap.add_argument("--skip-e2e", action="store_true")
    args = ap.parse_args(argv)
    if not USE_NUMBA:
        print("numba backend inactive (unset SIGMAQ_DISABLE_NUMBA); the table compares numpy with itself")

    rng = np.random.default_rng(0)
    print(f"{'kernel':<20}{'numba [ms]':>12}{'numpy [ms]':>12}{'speedup':>10}")
    for name, fast, slow in kernel_cases(rng):
        repeat = 1 if name.startswith("besq") else args.repeat
        tf, ts = best_of(fast, repeat), best_of(slow, repeat)
        print(f"{name:<20}{tf * 1e3:>12.2f}{ts * 1e3:>12.2f}{ts / tf:>9.1f}x")

    if args.skip_e2e:
        return
    res = end_to_end(args.n)
    print(f"\nend to end, verify_master at n = {args.n}, step 2^-8")
    print(f"{'model':<12}{'numba [s]':>12}{'numpy [s]':>12}{'speedup':>10}  same result")
    for model in res["numba"]:
        a, b = res["numba"][model], res["numpy"][model]
        same = np.allclose(a[1:], b[1:], rtol=1e-10, atol=1e-13)
        print(f"{model:<12}{a[0]:>12.2f}{b[0]:>12.2f}{b[0] / a[0]:>9.1f}x  {same}")


if __name__ == "__main__":
    main()
