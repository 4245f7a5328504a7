"""Command-line front end wiring configuration, runs, caching and CSV output.

Commands::

    equilibria | manifold | value | hjb | potential | exit-time | simulate | arrhenius

Every command takes ``--config PATH`` (TOML, see :mod:`lakelab.config`; the
canonical bistable lake is used when omitted), ``--out DIR``, ``--seed N``
(overrides the MC seed) and ``--quiet``.  The environment variable
``LAKELAB_CACHE`` overrides the cache directory.  Exit codes: 0 success,
2 configuration error (nothing written), 3 numerical failure, 4 cache I/O
failure.  Output files are fully determined by the configuration content
(headers carry versions and the config hash, never timestamps), so a rerun
with the same config is byte-identical.
"""

from __future__ import annotations

import argparse
import dataclasses
import math
import os
import sys
from typing import List, Optional

import numpy as np

from . import cache, config, hjb, metastability, output, pontryagin


def _say(quiet: bool, message: str) -> None:
    if not quiet:
        print(message, file=sys.stderr)


def _header(cfg: config.RunConfig, extra=()) -> List[str]:
    lines = output.version_lines()
    lines.append(f"config sha256: {cfg.sha256}")
    lines.extend(cfg.echo_lines())
    lines.extend(extra)
    return lines


def _candidate(cfg: config.RunConfig, x_max: Optional[float] = None):
    return pontryagin.build_candidate(
        cfg.params, cfg.curve, x_max=cfg.grid.x_max if x_max is None else x_max
    )


def _meta_gridspec(cfg: config.RunConfig) -> hjb.GridSpec:
    # Exit-time quadrature needs far-field headroom for its truncation bound;
    # a tight state-analysis domain would trip the bound check, so floor it.
    return hjb.GridSpec(x_max=max(20.0, cfg.grid.x_max), n=cfg.grid.n)


def _solve_cached(cfg, gridspec, cache_dir, quiet):
    valuefn, meta, hit = cache.cached_solve(
        cfg.params,
        cfg.curve,
        gridspec,
        tol=cfg.solver_tol,
        max_iter=cfg.solver_max_iter,
        cache_dir=cache_dir,
    )
    _say(quiet, "value function: cache hit" if hit else "value function: solved and cached")
    return valuefn, meta


def cmd_equilibria(cfg, out_dir, cache_dir, quiet) -> int:
    eqs = pontryagin.find_equilibria(cfg.params, cfg.curve, cfg.grid.x_max)
    columns, notes = output.equilibria_table(eqs)
    path = os.path.join(out_dir, "equilibria.csv")
    output.write_csv(path, columns, _header(cfg, notes))
    _say(quiet, f"wrote {path} ({len(eqs)} equilibria)")
    return 0


def cmd_manifold(cfg, out_dir, cache_dir, quiet) -> int:
    cand = _candidate(cfg)
    columns, notes = output.branch_table(cand.branches)
    path = os.path.join(out_dir, "manifold.csv")
    output.write_csv(path, columns, _header(cfg, notes))
    _say(quiet, f"wrote {path} ({len(cand.branches)} branches)")
    return 0


def cmd_value(cfg, out_dir, cache_dir, quiet) -> int:
    cand = _candidate(cfg)
    columns, notes = output.candidate_table(cand)
    path = os.path.join(out_dir, "value.csv")
    output.write_csv(path, columns, _header(cfg, notes))
    _say(quiet, f"wrote {path} ({cand.x.size} samples)")
    return 0


def cmd_hjb(cfg, out_dir, cache_dir, quiet) -> int:
    valuefn, meta = _solve_cached(cfg, cfg.grid, cache_dir, quiet)
    v2 = hjb.second_derivative_v2(valuefn, cfg.params, cfg.curve)
    res = hjb.residual(valuefn, cfg.params, cfg.curve)
    extra = [
        f"policy iteration: {meta['iterations']} iterations, residual "
        f"{output.fmt(meta['residual_norm'])} (scaled) / "
        f"{output.fmt(meta['residual_norm_raw'])} (raw)",
        f"boundary gaps at x = 0: value {output.fmt(meta['boundary_gap_value'])}, "
        f"curvature {output.fmt(meta['boundary_gap_curvature'])}",
        f"far-field -V/x^2 estimate: {output.fmt(meta['far_field_estimate'])}",
    ]
    path = os.path.join(out_dir, "hjb.csv")
    output.write_csv(path, output.hjb_table(valuefn, v2, res), _header(cfg, extra))
    _say(quiet, f"wrote {path}")
    return 0


def cmd_potential(cfg, out_dir, cache_dir, quiet) -> int:
    sigma = cfg.params.sigma
    if sigma == 0.0:
        valuefn = hjb.from_candidate(_candidate(cfg), cfg.grid)
    else:
        valuefn, _ = _solve_cached(cfg, cfg.grid, cache_dir, quiet)
    pot = metastability.build_potential(valuefn, cfg.params, cfg.curve,
                                        require_double_well=False)
    extra = [
        f"sigma = {output.fmt(sigma)}, epsilon = sigma^2/2 = {output.fmt(0.5 * sigma**2)}",
        "anchor: F(0) = 0",
    ]
    if pot.wells is not None:
        extra += [
            f"wells at y = {output.fmt(pot.wells[0])}, {output.fmt(pot.wells[1])} "
            f"(x = {output.fmt(math.exp(pot.wells[0]))}, {output.fmt(math.exp(pot.wells[1]))})",
            f"barrier at y = {output.fmt(pot.barrier)}, height above the deeper-side well "
            f"= {output.fmt(pot.barrier_height)}",
        ]
    else:
        extra.append("no double well on this grid (noise tilt can erase the shallow well)")
    path = os.path.join(out_dir, "potential.csv")
    output.write_csv(path, output.potential_table(pot), _header(cfg, extra))
    _say(quiet, f"wrote {path} ({pot.y.size} nodes)")
    return 0


def cmd_exit_time(cfg, out_dir, cache_dir, quiet) -> int:
    gridspec = _meta_gridspec(cfg)
    cand = _candidate(cfg, x_max=gridspec.x_max)
    pot0 = metastability.build_potential(
        hjb.from_candidate(cand, gridspec), cfg.params, cfg.curve
    )
    y_lo, y_hi = pot0.wells
    valuefn, _ = _solve_cached(cfg, gridspec, cache_dir, quiet)
    pot = metastability.build_potential(valuefn, cfg.params, cfg.curve,
                                        require_double_well=False)
    eps = 0.5 * cfg.params.sigma ** 2
    met = metastability.mean_exit_time_quadrature(
        pot, eps, y_start=y_hi, y_absorb=y_lo, rtol=cfg.quadrature_rtol
    )
    _say(quiet, f"quadrature E[tau] = {met.value:.6g} "
                f"({met.n_panels} panels, {met.refinements} refinements)")
    sample = metastability.simulate_exit(
        valuefn,
        cfg.params,
        cfg.curve,
        x_start=math.exp(y_hi),
        x_absorb=math.exp(y_lo),
        dt=cfg.mc_dt,
        n_paths=cfg.mc_n_paths,
        seed=cfg.mc_seed,
        t_cap=cfg.mc_horizon,
    )
    _say(quiet, f"Monte Carlo E[tau] = {sample.mean:.6g} +- {sample.stderr:.3g} "
                f"({sample.n_absorbed}/{sample.n_paths} absorbed)")
    row = metastability.ExitTimeReport(
        sigma=cfg.params.sigma,
        epsilon=eps,
        tau_quadrature=met.value,
        tau_mc=sample.mean,
        tau_mc_stderr=sample.stderr,
        eps_log_tau=eps * met.log_value,
        barrier_height=pot0.barrier_height,
        truncation_error_bound=met.truncation_bound,
    )
    extra = [
        f"start x = {output.fmt(math.exp(y_hi))}, absorbing x = {output.fmt(math.exp(y_lo))} "
        "(the deterministic stable states)",
        f"quadrature: rtol {output.fmt(cfg.quadrature_rtol)}, {met.n_panels} panels, "
        f"truncation bound {output.fmt(met.truncation_bound)}",
        f"Monte Carlo: {sample.n_paths} paths, dt {output.fmt(sample.dt)}, "
        f"seed {sample.seed}, t_cap {output.fmt(sample.t_cap)}, "
        f"{sample.n_censored} censored, half-step control mean "
        f"{output.fmt(sample.control_mean)} +- {output.fmt(sample.control_stderr)} "
        f"({sample.control_n} paths), step bias flagged: "
        f"{output.fmt(sample.step_bias_flagged)}",
        "barrier column: height of the deterministic potential barrier",
    ]
    path = os.path.join(out_dir, "exit_time.csv")
    output.write_csv(path, output.ladder_table([row]), _header(cfg, extra))
    _say(quiet, f"wrote {path}")
    return 0


def cmd_simulate(cfg, out_dir, cache_dir, quiet) -> int:
    cand = _candidate(cfg)
    split = cand.skiba.x if cand.skiba is not None else cand.threshold_x
    if split is None:
        split = float(np.median([br.equilibrium.x for br in cand.branches]))
    starts = (0.95 * split, 1.05 * split)
    if cfg.params.sigma == 0.0:
        valuefn = hjb.from_candidate(cand, cfg.grid)
        integrator = "adaptive Runge-Kutta in x (absolute tolerance 1e-12)"
    else:
        valuefn, _ = _solve_cached(cfg, cfg.grid, cache_dir, quiet)
        integrator = (f"Euler-Maruyama in log coordinates, dt = {output.fmt(cfg.mc_dt)}, "
                      f"seed = {cfg.mc_seed}")
    records = metastability.simulate_paths(
        valuefn,
        cfg.params,
        cfg.curve,
        starts,
        horizon=cfg.mc_horizon,
        dt=cfg.mc_dt,
        seed=cfg.mc_seed,
    )
    for k, record in enumerate(records):
        extra = [
            f"start x = {output.fmt(record.x_start)} "
            f"({'below' if record.x_start < split else 'above'} the policy threshold "
            f"x = {output.fmt(split)})",
            f"horizon = {output.fmt(cfg.mc_horizon)}, integrator: {integrator}",
        ]
        path = os.path.join(out_dir, f"paths_{k}.csv")
        output.write_csv(path, output.paths_table(record, k), _header(cfg, extra))
        _say(quiet, f"wrote {path} (x(T) = {record.x[-1]:.6g})")
    return 0


def cmd_arrhenius(cfg, out_dir, cache_dir, quiet) -> int:
    x_max = max(20.0, cfg.grid.x_max)
    report = metastability.arrhenius_estimate(
        cfg.params,
        cfg.curve,
        cfg.ladder,
        x_max=x_max,
        n=cfg.grid.n,
        rtol=cfg.quadrature_rtol,
        seed=cfg.mc_seed,
    )
    extra = [
        f"exit-time domain x_max = {output.fmt(x_max)} (floored at 20 for truncation headroom)",
        f"deterministic barrier height = {output.fmt(report.delta_F0)}",
        "deviations |eps ln E[tau] - barrier|: "
        + ", ".join(output.fmt(d) for d in report.deviations),
    ]
    if report.fit_slope is not None:
        extra.append(
            f"linear fit in eps: slope {output.fmt(report.fit_slope)}, intercept "
            f"{output.fmt(report.fit_intercept)}, intercept rel. err. vs barrier "
            f"{output.fmt(report.intercept_rel_err)}"
        )
    else:
        extra.append("single-rung ladder: no extrapolation")
    path = os.path.join(out_dir, "arrhenius.csv")
    output.write_csv(path, output.ladder_table(report.rows), _header(cfg, extra))
    _say(quiet, f"wrote {path} ({len(report.rows)} rungs)")
    return 0


_DISPATCH = {
    "equilibria": (cmd_equilibria, "locate and classify the interior steady states"),
    "manifold": (cmd_manifold, "sample the saddle stable-manifold arms (x, u, J_P)"),
    "value": (cmd_value, "build the candidate value envelope and Skiba metadata"),
    "hjb": (cmd_hjb, "solve the stochastic HJB equation (sigma > 0), with caching"),
    "potential": (cmd_potential, "assemble the log-coordinate potential F_sigma"),
    "exit-time": (cmd_exit_time, "mean exit time at params.sigma: quadrature and Monte Carlo"),
    "simulate": (cmd_simulate, "integrate controlled paths from starts straddling the threshold"),
    "arrhenius": (cmd_arrhenius, "exit-time ladder over the noise levels and its extrapolation"),
}


def _build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", metavar="PATH",
                        help="TOML run configuration (canonical lake when omitted)")
    common.add_argument("--out", metavar="DIR",
                        help="output directory (overrides config output_dir)")
    common.add_argument("--seed", type=int, metavar="N", help="override the MC seed")
    common.add_argument("--quiet", action="store_true", help="suppress progress messages")
    parser = argparse.ArgumentParser(
        prog="lakelab",
        description="Numerical laboratory for the stochastic shallow lake control problem.",
    )
    sub = parser.add_subparsers(dest="command", required=True, metavar="command")
    for name, (_, doc) in _DISPATCH.items():
        sub.add_parser(name, parents=[common], help=doc, description=doc)
    return parser


def _precheck(command: str, cfg: config.RunConfig) -> None:
    if command in ("hjb", "exit-time") and cfg.params.sigma <= 0.0:
        raise config.ConfigError(f"{command} requires params.sigma > 0")


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        cfg = config.load_config(args.config) if args.config else config.default_config()
        if args.seed is not None:
            cfg = dataclasses.replace(cfg, mc_seed=int(args.seed))
        _precheck(args.command, cfg)
    except config.ConfigError as err:
        print(f"lakelab: config error: {err}", file=sys.stderr)
        return 2
    out_dir = args.out or cfg.output_dir or "lakelab-out"
    cache_dir = os.environ.get("LAKELAB_CACHE") or cfg.cache_dir or os.path.join(out_dir, "cache")
    command = _DISPATCH[args.command][0]
    try:
        os.makedirs(out_dir, exist_ok=True)
        return command(cfg, out_dir, cache_dir, quiet=args.quiet)
    except cache.CacheError as err:
        print(f"lakelab: cache I/O failure: {err}", file=sys.stderr)
        return 4
    except OSError as err:
        print(f"lakelab: I/O failure: {err}", file=sys.stderr)
        return 1
    except (RuntimeError, ValueError, ArithmeticError) as err:
        print(f"lakelab: numerical failure: {err}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
