"""Class (Sigma) models under ``P`` and the measure ``Q`` each one is paired with.

A model name selects how a block of paths is built:

==============  ===========================  ==================  ==========
name            canonical path               X                   Q sampler
==============  ===========================  ==================  ==========
``abs_bm``      reflected BM (Levy)          ``|B|``             Q_ABS_BM
``w_plus``      signed BM                    ``B^+``             W_PLUS
``w_minus``     signed BM                    ``B^-``             W_MINUS
``w``           signed BM                    ``|B|``             W
``drawdown``    BM ``M``                     ``S - M``           W_MINUS
``bessel(d)``   Bessel(d), ``0 < d < 2``     ``Y^(2 - d)``       Q_BESSEL(d)
==============  ===========================  ==================  ==========

Signed Brownian paths come from the Levy construction with an independent
fair sign for each excursion, so their zeros are exact up to the grid
interval like those of the reflected path.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from . import kernels
from .errors import ConfigurationError
from .functionals import levy_arrays, zero_mask
from .grid import TimeGrid
from .paths import bessel_values, draw_brownian, _walk
from .qsampler import Q_ABS_BM, Q_BESSEL, W, W_MINUS, W_PLUS, MeasureTag
from .rng import derive_rng

_BESSEL_RE = re.compile(r"^bessel\(([^)]+)\)$")

LEVY_MODELS = ("abs_bm", "w_plus", "w_minus", "w", "drawdown")


@dataclass(frozen=True)
class Model:
    name: str
    delta: Optional[float] = None

    @classmethod
    def parse(cls, text: str) -> "Model":
        text = text.strip()
        if text in LEVY_MODELS:
            return cls(text)
        m = _BESSEL_RE.match(text)
        if m:
            d = float(m.group(1))
            if not (0.0 < d < 2.0):
                raise ConfigurationError(f"bessel model needs d in (0, 2), got {d!r}")
            return cls("bessel", d)
        raise ConfigurationError(f"unknown model {text!r}")

    def __str__(self):
        return self.name if self.delta is None else f"bessel({self.delta:g})"

    @property
    def q_tag(self) -> MeasureTag:
        return {
            "abs_bm": Q_ABS_BM,
            "w_plus": W_PLUS,
            "w_minus": W_MINUS,
            "w": W,
            "drawdown": W_MINUS,
        }.get(self.name) or Q_BESSEL(self.delta)

    @property
    def uses_race(self) -> bool:
        """The drawdown's last zero is read on ``W_MINUS`` through the maximum race."""
        return self.name == "drawdown"

    @property
    def alpha(self) -> float:
        return 1.0 - self.delta / 2.0


def p_block(model: Model, master: int, stream: int, indices: Sequence[int], grid: TimeGrid,
            eps: float = 0.01) -> dict:
    """Paths of ``model`` under ``P``: keys ``path``, ``x``, ``a``, ``mask``."""
    if model.name == "bessel":
        rows = len(indices)
        y = np.empty((rows, grid.n + 1))
        for r, i in enumerate(indices):
            y[r] = bessel_values(derive_rng((master, stream, i)), 0.0, model.delta, grid.step, grid.n)
        band = kernels.bessel_band(eps, grid.step)
        x = y ** (2 * model.alpha)
        a = kernels.besq_compensator(y, model.delta, grid.step, band)
        return {"path": y, "x": x, "a": a, "mask": y <= band}

    n = grid.n
    rows = len(indices)
    signed = model.name in ("w_plus", "w_minus", "w")
    z = np.empty((rows, n))
    umax = np.empty((rows, n))
    umin = np.empty((rows, n))
    coins = np.empty((rows, n), dtype=bool) if signed else None
    for r, i in enumerate(indices):
        rng = derive_rng((master, stream, i))
        z[r], umax[r], umin[r] = draw_brownian(rng, n)
        if signed:
            coins[r] = rng.random(n) < 0.5
    w = _walk(np.zeros(rows), grid.step, z)
    hi = kernels.bridge_max(w[:, :-1], w[:, 1:], grid.step, umax)
    refl, s, flags = levy_arrays(w, hi)
    mask = zero_mask(refl, 0.0, flags)
    if model.name == "abs_bm":
        return {"path": refl, "x": refl, "a": s, "mask": mask, "flags": flags}
    if model.name == "drawdown":
        return {"path": w, "x": refl, "a": s, "mask": mask, "flags": flags}
    y = refl * kernels.excursion_signs(flags, coins)
    if model.name == "w":
        return {"path": y, "x": refl, "a": s, "mask": mask, "flags": flags}
    if model.name == "w_plus":
        return {"path": y, "x": np.maximum(y, 0.0), "a": 0.5 * s, "mask": mask | (y <= 0.0), "flags": flags}
    return {"path": y, "x": np.maximum(-y, 0.0), "a": 0.5 * s, "mask": mask | (y >= 0.0), "flags": flags}
