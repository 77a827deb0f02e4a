from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError


@dataclass(frozen=True)
class TimeGrid:
    """Uniform grid ``0 = t_0 < ... < t_n = horizon``.

    Times are always ``step * index`` with an integer index; they are never
    accumulated, so long horizons do not drift.
    """

    step: float
    n: int

    def __post_init__(self):
        if not (self.step > 0 and math.isfinite(self.step)):
            raise ConfigurationError(f"grid step must be positive, got {self.step!r}")
        if int(self.n) != self.n or self.n < 1:
            raise ConfigurationError(f"grid needs at least one step, got n={self.n!r}")
        object.__setattr__(self, "n", int(self.n))

    @classmethod
    def from_horizon(cls, step: float, horizon: float) -> "TimeGrid":
        if not (step > 0) or not (horizon > 0):
            raise ConfigurationError("step and horizon must be positive")
        ratio = horizon / step
        n = round(ratio)
        if n < 1 or abs(n * step - horizon) > 4 * math.ulp(horizon):
            raise ConfigurationError(
                f"horizon {horizon!r} is not an integer multiple of step {step!r}"
            )
        return cls(step, n)

    @property
    def horizon(self) -> float:
        return self.n * self.step

    @property
    def times(self) -> np.ndarray:
        return self.step * np.arange(self.n + 1, dtype=np.float64)

    def time(self, index: int) -> float:
        return index * self.step

    def index_of(self, t: float) -> int:
        """Index of grid time ``t``; raises if ``t`` is off-grid or past the horizon."""
        k = round(t / self.step)
        if abs(k * self.step - t) > 4 * math.ulp(max(abs(t), self.step)) + 1e-12 * self.step:
            raise ConfigurationError(f"time {t!r} is not on the grid (step {self.step!r})")
        if k < 0 or k > self.n:
            raise ConfigurationError(f"time {t!r} outside [0, {self.horizon!r}]")
        return int(k)

    def extended(self, extra_steps: int) -> "TimeGrid":
        return TimeGrid(self.step, self.n + int(extra_steps))
