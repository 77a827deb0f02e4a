"""Monte Carlo plumbing shared by the samplers and the identity checks."""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from functools import partial
from typing import Callable

import numpy as np

from .errors import ConfigurationError
from .grid import TimeGrid
from . import kernels

BLOCK = 2048


@dataclass(frozen=True)
class EstimatorResult:
    mean: float
    stderr: float
    n: int
    bias_budget: float = 0.0

    @classmethod
    def from_samples(cls, values, bias_budget: float = 0.0) -> "EstimatorResult":
        v = np.asarray(values, dtype=np.float64)
        if v.size < 2:
            raise ValueError("need at least two samples")
        return cls(float(v.mean()), float(v.std(ddof=1) / math.sqrt(v.size)), int(v.size), float(bias_budget))

    @classmethod
    def exact(cls, value: float, n: int = 2) -> "EstimatorResult":
        """A closed-form value dressed as an estimate with zero standard error."""
        return cls(float(value), 0.0, max(int(n), 2), 0.0)

    def scaled(self, c: float) -> "EstimatorResult":
        return EstimatorResult(c * self.mean, abs(c) * self.stderr, self.n, abs(c) * self.bias_budget)


def run_blocks(fn: Callable, n: int, block: int = BLOCK, workers: int = 1):
    """Evaluate ``fn(range)`` over consecutive index blocks and concatenate.

    ``fn`` returns an array (or tuple of arrays) with one leading entry per
    index. Blocks are fixed by ``block`` alone, and results are stitched in
    index order, so the output does not depend on ``workers``.
    """
    if n < 1:
        raise ConfigurationError("sample count must be positive")
    ranges = [range(s, min(s + block, n)) for s in range(0, n, block)]
    if workers <= 1:
        parts = [fn(r) for r in ranges]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(fn, ranges))
    if isinstance(parts[0], tuple):
        return tuple(np.concatenate([p[k] for p in parts]) for k in range(len(parts[0])))
    return np.concatenate(parts)


# ---------------------------------------------------------------- cylinder functionals

FULL_FILTRATION = "FULL_FILTRATION"
ZEROS_FILTRATION = "ZEROS_FILTRATION"


@dataclass(frozen=True)
class CylinderFunctional:
    """Bounded functional of a path observed up to a (possibly random) time.

    ``kernel(values, running_max, last_zero)`` receives, per row, the path
    at ``times`` (each clipped to the observation time), the running maximum
    of the path up to the observation time, and the last zero time up to
    it (NaN if none). Under ``ZEROS_FILTRATION`` the ``values`` argument is
    replaced by zero indicators and ``running_max`` by NaN, so the kernel
    can only read the zero set.
    """

    times: tuple
    kernel: Callable
    bound: float
    measurability: str = FULL_FILTRATION
    name: str = ""

    def __post_init__(self):
        object.__setattr__(self, "times", tuple(float(s) for s in self.times))
        if any(b <= a for a, b in zip(self.times, self.times[1:])):
            raise ConfigurationError("evaluation times must increase")
        if self.measurability not in (FULL_FILTRATION, ZEROS_FILTRATION):
            raise ConfigurationError(f"unknown measurability tag {self.measurability!r}")

    @property
    def last_time(self) -> float:
        return self.times[-1] if self.times else 0.0

    @property
    def is_zero(self) -> bool:
        return self.name == "zero"

    def evaluate(self, grid: TimeGrid, path, mask, upto) -> np.ndarray:
        """Evaluate on a block: ``path``/``mask`` of shape ``(rows, n+1)``, ``upto`` per row."""
        rows = path.shape[0]
        upto = np.broadcast_to(np.asarray(upto, dtype=np.int64), (rows,))
        r = np.arange(rows)
        if self.times:
            idx = np.array([grid.index_of(s) for s in self.times])
            cols = np.minimum(idx[None, :], upto[:, None])
        else:
            cols = np.zeros((rows, 0), dtype=np.int64)
        last = kernels.last_true_index(mask)[r, upto]
        lastz = np.where(last >= 0, grid.step * last, np.nan)
        if self.measurability == ZEROS_FILTRATION:
            vals = np.take_along_axis(mask, cols, axis=1).astype(np.float64)
            rmax = np.full(rows, np.nan)
        else:
            vals = np.take_along_axis(path, cols, axis=1)
            rmax = np.maximum.accumulate(path, axis=1)[r, upto]
        out = np.asarray(self.kernel(vals, rmax, lastz), dtype=np.float64)
        out = np.broadcast_to(out, (rows,)).astype(np.float64)
        if np.any(np.abs(out) > self.bound * (1 + 1e-12)):
            raise ValueError(f"functional {self.name!r} exceeded its bound {self.bound}")
        return out


def _const_kernel(c, vals, rmax, lastz):
    return np.full(vals.shape[0], c)


def _abs_le_kernel(c, vals, rmax, lastz):
    return (np.abs(vals[:, 0]) <= c).astype(np.float64)


def _positive_kernel(vals, rmax, lastz):
    return (vals[:, 0] > 0).astype(np.float64)


def _sign_kernel(vals, rmax, lastz):
    return np.sign(vals[:, 0])


def _last_zero_le_kernel(u, vals, rmax, lastz):
    return (lastz <= u).astype(np.float64)


def constant(c: float) -> CylinderFunctional:
    return CylinderFunctional((), partial(_const_kernel, float(c)), abs(float(c)),
                              name="zero" if c == 0 else ("one" if c == 1 else f"const({c})"))


ONE = constant(1.0)
ZERO = constant(0.0)


def indicator_abs_le(s: float, c: float) -> CylinderFunctional:
    """``1{|path(s)| <= c}``."""
    return CylinderFunctional((s,), partial(_abs_le_kernel, float(c)), 1.0, name=f"abs_le({s},{c})")


def indicator_positive(s: float) -> CylinderFunctional:
    """``1{path(s) > 0}``."""
    return CylinderFunctional((s,), _positive_kernel, 1.0, name=f"positive({s})")


def sign_at(s: float) -> CylinderFunctional:
    return CylinderFunctional((s,), _sign_kernel, 1.0, name=f"sign({s})")


def indicator_last_zero_le(u: float) -> CylinderFunctional:
    """``1{g(t) <= u}`` with ``g(t)`` the last zero up to the observation time."""
    return CylinderFunctional((), partial(_last_zero_le_kernel, float(u)), 1.0,
                              ZEROS_FILTRATION, name=f"last_zero_le({u})")
