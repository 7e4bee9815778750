"""Flat ``key = value`` configuration files.

Every physical parameter, grid size, tolerance and seed can be set here; CLI
flags override file values.  Lines starting with ``#`` or ``;`` are comments.

Recognised keys (defaults in parentheses):

  delta, Omega (0), gamma (0), tau (0.25)
  periods (L / 2 pi; default from slow_box), n_points (default from periods), slow_box (40)
  fixed_point_tol (1e-10), newton_tol (1e-10), select_tol (1e-8)
  envelope_c (3 pi sqrt(3/2)), envelope_S (60), envelope_n (4096), envelope_shift (0)
  hstar_target (unset), C_multiplier (0.5), R_ball (2), modes (16), rolls_tol (1e-12)
  guard (0.05), method (newton-krylov), pin_omega (unset: Omega is selected)
  T (10), dt (0.1), seed (0), noise (1e-3), snap_every (0)
"""
from __future__ import annotations

import configparser
from pathlib import Path
from typing import Any

from .corrector import QuenchConfig, default_grid
from .errors import ConfigError
from .spectral import GridSpec

__all__ = ["DEFAULTS", "load_config", "merge", "make_config", "FLOAT_KEYS", "INT_KEYS"]

FLOAT_KEYS = {"delta", "Omega", "gamma", "tau", "slow_box", "fixed_point_tol", "newton_tol",
              "select_tol", "envelope_c", "envelope_S", "envelope_shift", "hstar_target",
              "C_multiplier", "R_ball", "rolls_tol", "guard", "pin_omega", "T", "dt", "noise"}
INT_KEYS = {"periods", "n_points", "envelope_n", "modes", "seed", "snap_every",
            "max_far_iter", "max_reduced_iter"}
STR_KEYS = {"method", "init"}

DEFAULTS: dict[str, Any] = {
    "delta": 0.05, "Omega": 0.0, "gamma": 0.0, "tau": 0.25, "slow_box": 40.0,
    "fixed_point_tol": 1e-10, "newton_tol": 1e-10, "select_tol": 1e-8,
    "envelope_S": 60.0, "envelope_n": 4096, "envelope_shift": 0.0,
    "C_multiplier": 0.5, "R_ball": 2.0, "modes": 16, "rolls_tol": 1e-12, "guard": 0.05,
    "method": "newton-krylov", "T": 10.0, "dt": 0.1, "seed": 0, "noise": 1e-3,
    "snap_every": 0, "init": "ansatz",
}


def _convert(key: str, raw: str) -> Any:
    try:
        if key in FLOAT_KEYS:
            return float(raw)
        if key in INT_KEYS:
            return int(raw)
        if key in STR_KEYS:
            return raw
    except ValueError as exc:
        raise ConfigError(f"bad value for {key}: {raw!r}") from exc
    raise ConfigError(f"unknown configuration key {key!r}")


def load_config(path: str | Path) -> dict[str, Any]:
    """Parse a flat key-value file into typed values."""
    text = Path(path).read_text()
    parser = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    parser.optionxform = str  # keep case (Omega vs omega)
    try:
        parser.read_string("[config]\n" + text)
    except configparser.Error as exc:
        raise ConfigError(f"cannot parse {path}: {exc}") from exc
    return {k: _convert(k, v) for k, v in parser["config"].items()}


def merge(*layers: dict[str, Any] | None) -> dict[str, Any]:
    """Later layers win; ``None`` values are skipped (unset CLI flags)."""
    out = dict(DEFAULTS)
    for layer in layers:
        for k, v in (layer or {}).items():
            if v is not None:
                out[k] = v
    return out


def make_config(params: dict[str, Any]) -> QuenchConfig:
    p = merge(params)
    delta = float(p["delta"])
    if "periods" in p:
        periods = int(p["periods"])
        n = int(p.get("n_points") or 1 << max(10, (40 * periods - 1).bit_length()))
        grid = GridSpec.from_periods(periods, n)
    else:
        grid = default_grid(delta, float(p["slow_box"]))
        if "n_points" in p:
            grid = GridSpec(grid.half_length, int(p["n_points"]))
    Omega = p["pin_omega"] if p.get("pin_omega") is not None else p["Omega"]
    kw = dict(delta=delta, Omega=float(Omega), gamma=float(p["gamma"]), tau=float(p["tau"]),
              grid=grid, fixed_point_tol=float(p["fixed_point_tol"]),
              newton_tol=float(p["newton_tol"]), envelope_S=float(p["envelope_S"]),
              envelope_n=int(p["envelope_n"]), envelope_shift=float(p["envelope_shift"]),
              C_multiplier=float(p["C_multiplier"]), R_ball=float(p["R_ball"]),
              modes=int(p["modes"]), rolls_tol=float(p["rolls_tol"]), guard=float(p["guard"]),
              method=str(p["method"]), seed=int(p["seed"]))
    if "envelope_c" in p:
        kw["envelope_c"] = float(p["envelope_c"])
    for k in ("max_far_iter", "max_reduced_iter"):
        if k in p:
            kw[k] = int(p[k])
    return QuenchConfig(**kw)
