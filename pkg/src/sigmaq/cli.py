"""Command line runner: ``sigmaq {verify,price,azema,simulate}``.

Configuration is a flat ``key = value`` file (``#`` starts a comment)::

    seed = 20240601
    n = 100000
    step = 0.0009765625
    horizon = 1
    model = abs_bm
    identities = master, stopping, doob
    z_crit = 4
    out = reports
    format = csv

Unknown keys are errors. Command-line flags override file values. Exit
status: 0 when every report passes, 1 if any fails, 3 if some are
inconclusive and none fails, 2 on a configuration error.
"""

from __future__ import annotations

import argparse
import io
import json
import math
import os
import sys
from dataclasses import dataclass, fields
from typing import Callable, Dict, List, Optional

import numpy as np

from .errors import ConfigurationError
from .estimators import ONE, indicator_abs_le, indicator_last_zero_le
from .functionals import Deterministic, Exponential, HittingLevel, IndicatorInterval
from .grid import TimeGrid
from .paths import simulate_bessel, simulate_bm, simulate_exp_martingale
from .verify import (
    FAIL,
    INCONCLUSIVE,
    IdentityReport,
    VerifyConfig,
    azema_slope,
    verify_ainf_image,
    verify_azema,
    verify_class_d,
    verify_doob,
    verify_martingale_constancy,
    verify_master,
    verify_nf_density,
    verify_stopping,
)

EXIT_OK = 0
EXIT_FAIL = 1
EXIT_CONFIG = 2
EXIT_INCONCLUSIVE = 3

COLUMNS = ("identity_id", "lhs_mean", "lhs_stderr", "rhs_mean", "rhs_stderr", "z",
           "bias_budget", "n", "seed", "verdict")


@dataclass(frozen=True)
class RunConfig:
    seed: int = 20240601
    n: int = 100_000
    step: float = 2.0 ** -10
    horizon: float = 1.0
    model: str = "abs_bm"
    identities: tuple = ("all",)
    z_crit: float = 4.0
    out: Optional[str] = None
    format: str = "csv"

    def __post_init__(self):
        for name in ("n", "step", "horizon", "z_crit"):
            if not getattr(self, name) > 0:
                raise ConfigurationError(f"config key {name!r} must be positive")
        if self.seed < 0:
            raise ConfigurationError("config key 'seed' must be nonnegative")
        if self.format not in ("csv", "json"):
            raise ConfigurationError(f"config key 'format' must be csv or json, got {self.format!r}")
        try:
            TimeGrid.from_horizon(self.step, self.horizon)
        except ConfigurationError as exc:
            raise ConfigurationError(f"config keys 'step'/'horizon': {exc}") from None
        for ident in self.identities:
            if ident != "all" and ident not in REGISTRY:
                raise ConfigurationError(f"config key 'identities': unknown identity {ident!r}")

    @property
    def selected(self) -> List[str]:
        out = []
        for ident in self.identities:
            for name in (DEFAULT_SUITE if ident == "all" else [ident]):
                if name not in out:
                    out.append(name)
        return out

    def verify_config(self, workers: int = 1) -> VerifyConfig:
        return VerifyConfig(n=self.n, seed=self.seed, step=self.step, horizon=self.horizon,
                            z_crit=self.z_crit, workers=workers)

    def dump(self) -> str:
        lines = []
        for f in fields(self):
            v = getattr(self, f.name)
            if f.name == "identities":
                v = ", ".join(v)
            elif isinstance(v, float):
                v = format(v, ".17g")
            elif v is None:
                continue
            lines.append(f"{f.name} = {v}")
        return "\n".join(lines) + "\n"


_CASTS = {"seed": int, "n": int, "step": float, "horizon": float, "z_crit": float,
          "model": str, "out": str, "format": str}


def _cast(key: str, raw: str):
    if key == "identities":
        items = tuple(s.strip() for s in raw.split(",") if s.strip())
        return items
    try:
        if _CASTS[key] is int:
            return int(raw, 10)
        if _CASTS[key] is float:
            v = float(raw)
            if not math.isfinite(v):
                raise ValueError(raw)
            return v
        return raw
    except ValueError:
        raise ConfigurationError(f"config key {key!r}: cannot parse {raw!r}") from None


def parse_config_text(text: str) -> dict:
    values = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigurationError(f"line {lineno}: expected 'key = value', got {line!r}")
        key, raw = (s.strip() for s in line.split("=", 1))
        if key not in _CASTS and key != "identities":
            raise ConfigurationError(f"unknown config key {key!r} (line {lineno})")
        if key in values:
            raise ConfigurationError(f"config key {key!r} given twice")
        values[key] = _cast(key, raw)
    return values


def load_config(path: Optional[str] = None, **overrides) -> RunConfig:
    values = {}
    if path is not None:
        try:
            with open(path, encoding="utf-8") as fh:
                values = parse_config_text(fh.read())
        except OSError as exc:
            raise ConfigurationError(f"cannot read config {path!r}: {exc.strerror}") from None
    values.update({k: v for k, v in overrides.items() if v is not None})
    return RunConfig(**values)


# ---------------------------------------------------------------- registry


def _hit_rule(h):
    return HittingLevel(1.0, h)


def _model_for(rc: RunConfig, *allowed):
    if allowed and rc.model not in allowed and not (rc.model.startswith("bessel(") and "bessel" in allowed):
        raise ConfigurationError(f"config key 'model': {rc.model!r} is not supported here")
    return rc.model


REGISTRY: Dict[str, Callable] = {
    "master": lambda rc, vc: [verify_master(_model_for(rc), ONE, rc.horizon, vc, "master")],
    "master_indicator": lambda rc, vc: [verify_master(
        _model_for(rc), indicator_abs_le(rc.horizon / 2, 0.5), rc.horizon, vc, "master_indicator")],
    "stopping": lambda rc, vc: [verify_stopping(
        _model_for(rc, "abs_bm", "w_plus", "w_minus", "w", "bessel"), ONE, _hit_rule(rc.horizon), vc, "stopping")],
    "class_d": lambda rc, vc: [verify_class_d(ONE, Deterministic(rc.horizon / 2), vc)],
    "doob": lambda rc, vc: [verify_doob(ONE, Deterministic(rc.horizon), vc)],
    "nf_density": lambda rc, vc: [verify_nf_density(
        _model_for(rc, "abs_bm", "w_plus", "w_minus", "w", "bessel"), Exponential(1.0), ONE, rc.horizon, vc,
        "nf_density")],
    "ainf_image": lambda rc, vc: [verify_ainf_image("abs_bm", IndicatorInterval(1.0), vc, "ainf_image")],
    "ainf_image_class_d": lambda rc, vc: [verify_ainf_image("class_d", IndicatorInterval(1.0), vc,
                                                                    "ainf_image_class_d")],
    "mf_constancy": lambda rc, vc: verify_martingale_constancy(
        _model_for(rc), Exponential(1.0),
        [Deterministic(rc.horizon / 4), Deterministic(rc.horizon), _hit_rule(rc.horizon)], vc, "mf_constancy"),
    "drawdown": lambda rc, vc: [verify_master("drawdown", ONE, rc.horizon, vc, "drawdown")],
    "azema": lambda rc, vc: [verify_azema(0.5, ONE, rc.horizon, vc, "azema")],
    "azema_zeros": lambda rc, vc: [verify_azema(0.5, indicator_last_zero_le(rc.horizon / 2), rc.horizon, vc,
                                                "azema_zeros")],
    "azema_slope": lambda rc, vc: [azema_slope(vc, rc.horizon)],
}

DEFAULT_SUITE = ("master", "master_indicator", "stopping", "class_d", "doob", "nf_density",
                 "ainf_image", "ainf_image_class_d", "mf_constancy", "drawdown", "azema", "azema_slope")
AZEMA_SUITE = ("azema", "azema_zeros", "azema_slope")


def run_identities(rc: RunConfig, names, workers: int = 1) -> List[IdentityReport]:
    vc = rc.verify_config(workers)
    reports = []
    for name in names:
        reports.extend(REGISTRY[name](rc, vc))
    return reports


def exit_status(reports) -> int:
    verdicts = {r.verdict for r in reports}
    if FAIL in verdicts:
        return EXIT_FAIL
    if INCONCLUSIVE in verdicts:
        return EXIT_INCONCLUSIVE
    return EXIT_OK


# ---------------------------------------------------------------- output


def _num(v) -> str:
    if isinstance(v, (int, np.integer)) and not isinstance(v, bool):
        return str(int(v))
    v = float(v)
    if math.isnan(v):
        return "NaN"
    if math.isinf(v):
        return "Infinity" if v > 0 else "-Infinity"
    return format(v, ".17g")


def report_row(r: IdentityReport) -> dict:
    return {
        "identity_id": r.identity_id,
        "lhs_mean": r.lhs.mean,
        "lhs_stderr": r.lhs.stderr,
        "rhs_mean": r.rhs.mean,
        "rhs_stderr": r.rhs.stderr,
        "z": r.z,
        "bias_budget": r.bias_budget,
        "n": int(r.n),
        "seed": int(r.seed),
        "verdict": r.verdict,
    }


def emit(reports, fmt: str = "csv") -> str:
    """Render reports as CSV (header plus one row each) or JSON lines."""
    buf = io.StringIO()
    if fmt == "csv":
        buf.write(",".join(COLUMNS) + "\n")
        for r in reports:
            row = report_row(r)
            buf.write(",".join(row[c] if c in ("identity_id", "verdict") else _num(row[c]) for c in COLUMNS) + "\n")
    elif fmt == "json":
        for r in reports:
            row = report_row(r)
            parts = [f"{json.dumps(c)}: " + (json.dumps(row[c]) if c in ("identity_id", "verdict") else _num(row[c]))
                     for c in COLUMNS]
            buf.write("{" + ", ".join(parts) + "}\n")
    else:
        raise ConfigurationError(f"unknown format {fmt!r}")
    return buf.getvalue()


def parse_emitted(text: str, fmt: str = "csv") -> List[dict]:
    """Inverse of :func:`emit` (numbers back to floats/ints)."""
    rows = []
    if fmt == "json":
        for line in text.splitlines():
            if line.strip():
                rows.append(json.loads(line))
        return rows
    lines = text.splitlines()
    header = lines[0].split(",")
    for line in lines[1:]:
        raw = dict(zip(header, line.split(",")))
        rows.append({k: (raw[k] if k in ("identity_id", "verdict") else int(raw[k]) if k in ("n", "seed")
                         else float(raw[k])) for k in header})
    return rows


def write_outputs(reports, rc: RunConfig, out: Optional[str], stem: str = "reports") -> None:
    text = emit(reports, rc.format)
    if out is None:
        sys.stdout.write(text)
        return
    ext = "csv" if rc.format == "csv" else "jsonl"
    try:
        os.makedirs(out, exist_ok=True)
        with open(os.path.join(out, f"{stem}.{ext}"), "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        with open(os.path.join(out, f"{stem}.config"), "w", encoding="utf-8") as fh:
            fh.write(rc.dump())
    except OSError as exc:
        raise ConfigurationError(f"cannot write to {out!r}: {exc.strerror}") from None


def run(rc: RunConfig, command: str = "verify", workers: int = 1, **extra) -> int:
    """Execute a subcommand for a validated config; returns the exit status."""
    if command == "verify":
        reports = run_identities(rc, rc.selected, workers)
    elif command == "azema":
        reports = run_identities(rc, AZEMA_SUITE, workers)
    elif command == "price":
        from .pricing import PutSpec, price_report

        spec = PutSpec(extra.get("strike", 1.0), extra.get("maturity", 1.0), extra.get("x0", 1.0),
                       extra.get("tmax", 8.0), extra.get("price_step", 2.0 ** -6))
        vc = VerifyConfig(n=rc.n, seed=rc.seed, step=spec.step, horizon=spec.T_max, z_crit=rc.z_crit)
        reports = price_report(spec, rc.n, rc.seed, cfg=vc, workers=workers)
    elif command == "simulate":
        text = simulate_csv(rc, extra.get("kind", "bm"), extra.get("paths", 1))
        if rc.out is None:
            sys.stdout.write(text)
        else:
            try:
                os.makedirs(rc.out, exist_ok=True)
                with open(os.path.join(rc.out, "paths.csv"), "w", encoding="utf-8", newline="") as fh:
                    fh.write(text)
            except OSError as exc:
                raise ConfigurationError(f"cannot write to {rc.out!r}: {exc.strerror}") from None
        return EXIT_OK
    else:
        raise ConfigurationError(f"unknown command {command!r}")
    write_outputs(reports, rc, rc.out)
    return exit_status(reports)


def simulate_csv(rc: RunConfig, kind: str, paths: int) -> str:
    """``time,value`` rows for one path; with several, a leading ``path`` column."""
    grid = TimeGrid.from_horizon(rc.step, rc.horizon)
    makers = {
        "bm": lambda s: simulate_bm(s, grid),
        "exp": lambda s: simulate_exp_martingale(s, grid),
        "bes3": lambda s: simulate_bessel(s, grid, 3.0),
    }
    if kind.startswith("bessel(") and kind.endswith(")"):
        d = float(kind[7:-1])
        makers[kind] = lambda s: simulate_bessel(s, grid, d)
    if kind not in makers:
        raise ConfigurationError(f"unknown path kind {kind!r}")
    buf = io.StringIO()
    buf.write("time,value\n" if paths == 1 else "path,time,value\n")
    times = grid.times
    for p in range(paths):
        v = makers[kind]((rc.seed, 0, p)).values
        for t, x in zip(times, v):
            if paths == 1:
                buf.write(f"{_num(t)},{_num(x)}\n")
            else:
                buf.write(f"{p},{_num(t)},{_num(x)}\n")
    return buf.getvalue()


# ---------------------------------------------------------------- argv


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="sigmaq", description="Monte Carlo checks of sigma-finite path measures.")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in ("verify", "price", "azema", "simulate"):
        p = sub.add_parser(name)
        p.add_argument("--config")
        p.add_argument("--seed", type=int)
        p.add_argument("--samples", type=int, help="samples per side (n)")
        p.add_argument("--out")
        p.add_argument("--format", choices=("csv", "json"))
        p.add_argument("--workers", type=int, default=1)
        if name == "verify":
            p.add_argument("--identities", help="comma-separated identity ids")
            p.add_argument("--model")
        if name == "price":
            p.add_argument("--strike", type=float, default=1.0)
            p.add_argument("--maturity", type=float, default=1.0)
            p.add_argument("--x0", type=float, default=1.0)
            p.add_argument("--tmax", type=float, default=8.0)
            p.add_argument("--price-step", type=float, default=2.0 ** -6)
        if name == "simulate":
            p.add_argument("--kind", default="bm", help="bm, exp, bes3 or bessel(d)")
            p.add_argument("--paths", type=int, default=1)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        overrides = {"seed": args.seed, "n": args.samples, "out": args.out, "format": args.format}
        if args.command == "verify":
            if args.identities is not None:
                overrides["identities"] = _cast("identities", args.identities)
            overrides["model"] = args.model
        rc = load_config(args.config, **overrides)
        extra = {k: getattr(args, k) for k in ("strike", "maturity", "x0", "tmax", "price_step", "kind", "paths")
                 if hasattr(args, k)}
        if args.workers < 1:
            raise ConfigurationError("--workers must be positive")
        return run(rc, args.command, args.workers, **extra)
    except ConfigurationError as exc:
        print(f"sigmaq: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
