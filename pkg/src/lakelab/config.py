"""Strict TOML run configuration for the command-line front end.

A run is a small TOML document; every key is checked against the schema and
unknown keys are rejected outright, so a typo in a tolerance name fails the
run instead of silently falling back to a default.

Schema (all tables optional except ``[params]``)::

    [params]      b, c, rho (required), sigma (default 0.0)
    [curve]       name = "hill" (default); a, m: asymptote and half-saturation
    [grid]        x_max (default 4 * largest root of b*x = r(x)), n (default 4096)
    [tolerances]  solver_tol, solver_max_iter, quadrature_rtol
    [mc]          n_paths, dt, seed, horizon
    ladder        decreasing noise levels for the exit-time ladder
    output_dir, cache_dir   destination directories

Defaulted values are echoed (marked as such) so the effective configuration
is always visible in output headers.
"""

from __future__ import annotations

import dataclasses
import hashlib
from typing import List, Optional, Tuple

import numpy as np
import tomli

from .hjb import GridSpec, _largest_balance_root
from .model import LakeParams, RecyclingCurve, hill_curve, make_curve


class ConfigError(ValueError):
    """A configuration file failed schema or invariant validation."""


DEFAULT_LADDER = (0.30, 0.22, 0.16, 0.12)

DEFAULT_TEXT = """\
[params]
b = 0.65
c = 0.512
rho = 0.03
"""


@dataclasses.dataclass(frozen=True)
class RunConfig:
    """Validated, fully-defaulted settings for one pipeline run."""

    params: LakeParams
    curve: RecyclingCurve
    grid: GridSpec
    x_max_defaulted: bool
    solver_tol: float
    solver_max_iter: int
    quadrature_rtol: float
    mc_n_paths: int
    mc_dt: float
    mc_seed: int
    mc_horizon: float
    ladder: Tuple[float, ...]
    ladder_defaulted: bool
    output_dir: Optional[str]
    cache_dir: Optional[str]
    sha256: str

    def echo_lines(self) -> List[str]:
        """The effective configuration, one stable line per setting."""
        p = self.params
        x_max_note = " (defaulted: 4 * largest root of b*x = r(x))" if self.x_max_defaulted else ""
        ladder_note = " (defaulted)" if self.ladder_defaulted else ""
        return [
            "settings:",
            f"  params.b = {p.b!r}",
            f"  params.c = {p.c!r}",
            f"  params.rho = {p.rho!r}",
            f"  params.sigma = {p.sigma!r}",
            f"  curve = {self.curve.name}",
            f"  grid.x_max = {self.grid.x_max!r}{x_max_note}",
            f"  grid.n = {self.grid.n}",
            f"  tolerances.solver_tol = {self.solver_tol!r}",
            f"  tolerances.solver_max_iter = {self.solver_max_iter}",
            f"  tolerances.quadrature_rtol = {self.quadrature_rtol!r}",
            f"  mc.n_paths = {self.mc_n_paths}",
            f"  mc.dt = {self.mc_dt!r}",
            f"  mc.seed = {self.mc_seed}",
            f"  mc.horizon = {self.mc_horizon!r}",
            f"  ladder = {', '.join(repr(s) for s in self.ladder)}{ladder_note}",
        ]


def load_config(path: str) -> RunConfig:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            text = fh.read()
    except OSError as err:
        raise ConfigError(f"cannot read config file {path!r}: {err}") from err
    return from_text(text)


def default_config() -> RunConfig:
    """The canonical bistable lake with every other setting defaulted."""
    return from_text(DEFAULT_TEXT)


def from_text(text: str) -> RunConfig:
    try:
        doc = tomli.loads(text)
    except tomli.TOMLDecodeError as err:
        raise ConfigError(f"TOML parse failure: {err}") from err

    _check_keys(doc, "", {"params", "curve", "grid", "tolerances", "mc",
                          "ladder", "output_dir", "cache_dir"})

    params_tbl = _table(doc, "params", required=True)
    _check_keys(params_tbl, "params", {"b", "c", "rho", "sigma"})
    b = _num(params_tbl, "b", "params", required=True)
    c = _num(params_tbl, "c", "params", required=True)
    rho = _num(params_tbl, "rho", "params", required=True)
    sigma = _num(params_tbl, "sigma", "params", default=0.0)
    try:
        params = LakeParams(b=b, c=c, rho=rho, sigma=sigma)
    except ValueError as err:
        raise ConfigError(f"params: {err}") from err

    curve_tbl = _table(doc, "curve")
    _check_keys(curve_tbl, "curve", {"name", "a", "m"})
    name = curve_tbl.get("name", "hill")
    if not isinstance(name, str):
        raise ConfigError("curve.name must be a string")
    if name != "hill":
        raise ConfigError(f"unknown curve name {name!r} (known: hill)")
    a = _num(curve_tbl, "a", "curve", default=1.0)
    m = _num(curve_tbl, "m", "curve", default=1.0)
    try:
        curve = _hill(a, m)
    except ValueError as err:
        raise ConfigError(f"curve: {err}") from err

    grid_tbl = _table(doc, "grid")
    _check_keys(grid_tbl, "grid", {"x_max", "n"})
    x_max = _num(grid_tbl, "x_max", "grid", default=None)
    x_max_defaulted = x_max is None
    if x_max_defaulted:
        x_max = 4.0 * _largest_balance_root(params, curve)
    n = _num(grid_tbl, "n", "grid", default=4096, integer=True)
    try:
        grid = GridSpec(x_max=float(x_max), n=int(n))
    except ValueError as err:
        raise ConfigError(f"grid: {err}") from err

    tol_tbl = _table(doc, "tolerances")
    _check_keys(tol_tbl, "tolerances", {"solver_tol", "solver_max_iter", "quadrature_rtol"})
    solver_tol = _num(tol_tbl, "solver_tol", "tolerances", default=1e-9, positive=True)
    solver_max_iter = _num(tol_tbl, "solver_max_iter", "tolerances", default=200,
                           integer=True, positive=True)
    quadrature_rtol = _num(tol_tbl, "quadrature_rtol", "tolerances", default=1e-7,
                           positive=True)

    mc_tbl = _table(doc, "mc")
    _check_keys(mc_tbl, "mc", {"n_paths", "dt", "seed", "horizon"})
    mc_n_paths = _num(mc_tbl, "n_paths", "mc", default=10_000, integer=True, positive=True)
    mc_dt = _num(mc_tbl, "dt", "mc", default=1e-3, positive=True)
    mc_seed = _num(mc_tbl, "seed", "mc", default=0, integer=True)
    mc_horizon = _num(mc_tbl, "horizon", "mc", default=400.0, positive=True)

    ladder_defaulted = "ladder" not in doc
    if ladder_defaulted:
        ladder = DEFAULT_LADDER
    else:
        raw = doc["ladder"]
        if not isinstance(raw, list) or not raw:
            raise ConfigError("ladder must be a non-empty array of noise levels")
        ladder = []
        for i, s in enumerate(raw):
            if isinstance(s, bool) or not isinstance(s, (int, float)) or not np.isfinite(s):
                raise ConfigError(f"ladder[{i}] must be a finite number")
            if s <= 0.0:
                raise ConfigError(f"ladder[{i}] must be positive")
            ladder.append(float(s))
        ladder = tuple(ladder)

    output_dir = _string(doc, "output_dir")
    cache_dir = _string(doc, "cache_dir")

    return RunConfig(
        params=params,
        curve=curve,
        grid=grid,
        x_max_defaulted=x_max_defaulted,
        solver_tol=float(solver_tol),
        solver_max_iter=int(solver_max_iter),
        quadrature_rtol=float(quadrature_rtol),
        mc_n_paths=int(mc_n_paths),
        mc_dt=float(mc_dt),
        mc_seed=int(mc_seed),
        mc_horizon=float(mc_horizon),
        ladder=ladder,
        ladder_defaulted=ladder_defaulted,
        output_dir=output_dir,
        cache_dir=cache_dir,
        sha256=hashlib.sha256(text.encode("utf-8")).hexdigest(),
    )


def _hill(a: float, m: float) -> RecyclingCurve:
    """Hill-type recycling with asymptote ``a`` and half-saturation ``m``."""
    if a == 1.0 and m == 1.0:
        return hill_curve()
    if a <= 0.0 or m <= 0.0:
        raise ValueError("curve parameters a and m must be positive")
    m2 = m * m

    def r(x):
        x = np.asarray(x, dtype=float)
        return a * x * x / (m2 + x * x)

    def r_prime(x):
        x = np.asarray(x, dtype=float)
        return 2.0 * a * m2 * x / (m2 + x * x) ** 2

    def r_second(x):
        x = np.asarray(x, dtype=float)
        return 2.0 * a * m2 * (m2 - 3.0 * x * x) / (m2 + x * x) ** 3

    return make_curve(f"hill(a={a!r},m={m!r})", r, r_prime, a=a, r_second=r_second)


def _table(doc: dict, name: str, required: bool = False) -> dict:
    if name not in doc:
        if required:
            raise ConfigError(f"missing required table [{name}]")
        return {}
    tbl = doc[name]
    if not isinstance(tbl, dict):
        raise ConfigError(f"{name} must be a table")
    return tbl


def _check_keys(tbl: dict, where: str, known: set) -> None:
    unknown = sorted(set(tbl) - known)
    if unknown:
        prefix = f"{where}." if where else ""
        raise ConfigError(
            f"unknown key {prefix}{unknown[0]!r} (known: {', '.join(sorted(known))})"
        )


def _num(tbl: dict, key: str, where: str, *, required: bool = False, default=None,
         integer: bool = False, positive: bool = False):
    if key not in tbl:
        if required:
            raise ConfigError(f"missing required key {where}.{key}")
        return default
    value = tbl[key]
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"{where}.{key} must be a number")
    if integer and not isinstance(value, int):
        raise ConfigError(f"{where}.{key} must be an integer")
    if not np.isfinite(value):
        raise ConfigError(f"{where}.{key} must be finite")
    if positive and value <= 0:
        raise ConfigError(f"{where}.{key} must be positive")
    return value


def _string(doc: dict, key: str) -> Optional[str]:
    if key not in doc:
        return None
    value = doc[key]
    if not isinstance(value, str) or not value:
        raise ConfigError(f"{key} must be a non-empty string")
    return value
