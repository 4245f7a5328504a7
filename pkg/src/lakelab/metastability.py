"""Metastability of the optimally controlled lake: potential, exit times,
Arrhenius asymptotics.

Under the feedback policy ``u*(x) = -1/V'(x)`` the controlled state solves
``dx = f(x, u*(x)) dt + sigma*x dW``.  The substitution ``y = ln x`` removes
the degeneracy at the origin and turns the dynamics into a gradient flow

    dy = -F_sigma'(y) dt + sigma dW,
    F_sigma'(y) = 1/(V'(e^y) e^y) + b - r(e^y) e^{-y} + sigma**2/2,

whose potential ``F_sigma`` (anchored ``F(0) = 0``) is double-welled in the
bistable regime for small sigma.  With ``eps = sigma**2/2`` the expected
first-hitting time of ``y_absorb`` starting from ``y_start`` has the exact
Poisson-problem representation

    E[tau] = (1/eps) int_{y_absorb}^{y_start} e^{F(z)/eps}
                      int_z^{infty} e^{-F(y)/eps} dy dz,

evaluated here with log-sum-exp accumulation (the raw integrand spans
hundreds of orders of magnitude for small eps) and an explicit truncation
bound for the infinite upper limit from the linear tail growth of F.  As the
noise vanishes, ``eps * ln E[tau]`` approaches the deterministic barrier
height ``F_0(y*) - F_0(y_+)``.
"""
from __future__ import annotations

import dataclasses
import functools
import logging
import math
from typing import Optional, Sequence

import numpy as np
from scipy.integrate import cumulative_trapezoid, solve_ivp
from scipy.interpolate import CubicHermiteSpline

from .hjb import GridSpec, ValueFunction, default_grid, from_candidate, solve_hjb
from .model import LakeParams, RecyclingCurve
from .pontryagin import build_candidate

__all__ = [
    "MetastabilityError",
    "Potential",
    "MeanExitTime",
    "ExitSample",
    "ExitTimeReport",
    "ArrheniusReport",
    "PathRecord",
    "default_y_grid",
    "build_potential",
    "mean_exit_time_quadrature",
    "simulate_exit",
    "arrhenius_estimate",
    "simulate_paths",
]

logger = logging.getLogger(__name__)


class MetastabilityError(RuntimeError):
    """A potential/exit-time computation could not satisfy its contract."""


def default_y_grid(x_max: float, y_min: float = -6.0, target_dy: float = 5e-4) -> np.ndarray:
    """Uniform log-coordinate grid containing y = 0 and ending at ln(x_max).

    The anchor F(0) = 0 then falls on a node, and the upper end maps exactly
    onto the value function's last available abscissa.  The spacing controls
    the only first-order error source in the potential: the trapezoid cell
    containing the sigma = 0 barrier corner.
    """
    y_max = math.log(x_max)
    if y_max <= 0.0 or y_min >= 0.0:
        raise ValueError("need y_min < 0 < ln(x_max)")
    n_hi = max(1, math.ceil(y_max / target_dy))
    dy = y_max / n_hi
    n_lo = math.ceil(-y_min / dy)
    return dy * np.arange(-n_lo, n_hi + 1)


@dataclasses.dataclass(frozen=True)
class Potential:
    """The log-coordinate potential F_sigma on a uniform grid.

    ``F`` and ``Fp`` hold nodal values of the potential and its derivative
    (the derivative comes from the defining formula, not differencing, so a
    cubic Hermite interpolant reproduces both).  ``wells``/``barrier`` are
    refined critical points when the double-well structure is present, else
    None.
    """

    y: np.ndarray
    F: np.ndarray
    Fp: np.ndarray
    sigma: float
    wells: Optional[tuple]  # (y_minus, y_plus)
    barrier: Optional[float]  # y_star

    def __post_init__(self) -> None:
        if not (self.y.shape == self.F.shape == self.Fp.shape):
            raise ValueError("y, F, Fp must share a shape")
        if self.y.size < 4:
            raise ValueError("potential grid too small")
        dy = np.diff(self.y)
        if not np.allclose(dy, dy[0], rtol=1e-9, atol=0.0):
            raise ValueError("potential grid must be uniform")
        if self.y[0] <= 0.0 <= self.y[-1]:
            if abs(float(self._spline(0.0))) > 1e-8:
                raise ValueError("potential must be anchored to F(0) = 0")
        if self.wells is not None:
            ym, yp = self.wells
            if self.barrier is None or not ym < self.barrier < yp:
                raise ValueError("wells must bracket the barrier")
            Fm, Fs, Fp_ = self.value(ym), self.value(self.barrier), self.value(yp)
            if not (Fs > Fm and Fs > Fp_):
                raise ValueError("barrier must sit above both wells")

    @functools.cached_property
    def _spline(self):
        return CubicHermiteSpline(self.y, self.F, self.Fp)

    def value(self, y):
        return self._spline(y)

    def derivative(self, y):
        return self._spline(y, 1)

    @functools.cached_property
    def growth_minorant(self) -> Optional[tuple]:
        """(g, C) with F(y) >= g*y + C on the grid's tail, for truncation bounds.

        The slope is the smallest F' over the outer tail (y above
        max(1, y_end - 2)); the intercept makes the line a minorant on all of
        y >= 1.  None when the grid has no tail past y = 1 or the slope is
        not positive.
        """
        tail = self.y >= max(1.0, self.y[-1] - 2.0)
        if not tail.any():
            return None
        g = float(np.min(self.Fp[tail]))
        if g <= 0.0:
            return None
        region = self.y >= 1.0
        C = float(np.min(self.F[region] - g * self.y[region]))
        return (g, C)

    @property
    def barrier_height(self) -> Optional[float]:
        """F(y_star) - F(y_plus), the right barrier, when the structure exists."""
        if self.wells is None or self.barrier is None:
            return None
        return float(self.value(self.barrier) - self.value(self.wells[1]))


def _fprime_fn(valuefn: ValueFunction, params: LakeParams, curve: RecyclingCurve):
    """F_sigma' as a plain callable of y, evaluated from the value function."""
    s2h = 0.5 * valuefn.sigma**2
    b = params.b

    def fp(y):
        x = np.exp(y)
        vp = valuefn.derivative(x)
        return 1.0 / (vp * x) + b - curve.r(x) / x + s2h

    return fp


def build_potential(
    valuefn: ValueFunction,
    params: LakeParams,
    curve: RecyclingCurve,
    y_grid: Optional[np.ndarray] = None,
    *,
    require_double_well: bool = True,
) -> Potential:
    """Assemble F_sigma from a value function on a log-coordinate grid.

    ``F'`` is evaluated pointwise from the defining formula (the sigma term
    comes from ``valuefn.sigma``, which is zero for a Pontryagin-provenance
    value function); ``F`` follows by cumulative trapezoid, then the anchor
    ``F(0) = 0`` is imposed exactly through the interpolant.  Wells and the
    barrier are located by a sign scan of the nodal ``F'`` and refined by
    bisection on the continuous expression — at sigma = 0 the barrier is a
    corner of F (the policy jump), where a smooth-model refinement would be
    biased but a sign-change bisection is exact.

    Raises
    ------
    MetastabilityError
        If V' >= 0 anywhere on the needed range, or if
        ``require_double_well`` and the minimum/maximum/minimum pattern is
        absent (large sigma tilts the landscape into a single well).
    """
    if y_grid is None:
        y_grid = default_y_grid(valuefn.grid.x_max)
    y = np.asarray(y_grid, dtype=float)
    x = np.exp(y)
    if x[-1] > valuefn.grid.x_max * (1.0 + 1e-12):
        raise ValueError("y grid extends past the value function's domain")
    vp = valuefn.derivative(x)
    if np.any(vp >= 0.0):
        raise MetastabilityError("V' must be negative on the whole y grid")
    Fp = 1.0 / (vp * x) + params.b - curve.r(x) / x + 0.5 * valuefn.sigma**2
    F = cumulative_trapezoid(Fp, y, initial=0.0)
    F = F - float(CubicHermiteSpline(y, F, Fp)(0.0))

    fp = _fprime_fn(valuefn, params, curve)
    sign = Fp > 0.0
    flips = np.nonzero(sign[1:] != sign[:-1])[0]
    minima, maxima = [], []
    for i in flips:
        a_, b_ = float(y[i]), float(y[i + 1])
        left_neg = Fp[i] < 0.0
        for _ in range(80):
            m = 0.5 * (a_ + b_)
            if (float(fp(m)) < 0.0) == left_neg:
                a_ = m
            else:
                b_ = m
        yc = 0.5 * (a_ + b_)
        (minima if left_neg else maxima).append(yc)

    wells = barrier = None
    if len(minima) == 2:
        between = [m for m in maxima if minima[0] < m < minima[1]]
        if len(between) == 1:
            wells = (minima[0], minima[1])
            barrier = between[0]
    if wells is None:
        if require_double_well:
            raise MetastabilityError(
                f"double-well structure absent at sigma={valuefn.sigma:g}: "
                f"{len(minima)} minima, {len(maxima)} maxima found"
            )
        logger.info(
            "potential at sigma=%g is not double-welled (%d minima); "
            "wells/barrier left unset",
            valuefn.sigma,
            len(minima),
        )
    return Potential(y=y, F=F, Fp=Fp, sigma=valuefn.sigma, wells=wells, barrier=barrier)


@dataclasses.dataclass(frozen=True)
class MeanExitTime:
    """Exact mean exit time by quadrature, with its truncation certificate."""

    value: float
    log_value: float
    epsilon: float
    y_start: float
    y_absorb: float
    y_upper: float
    truncation_bound: float
    n_panels: int
    refinements: int
    converged: bool


def _log_trapz_suffix(a: np.ndarray, dy: float) -> np.ndarray:
    # log of G_i = dy * (e^{a_i}/2 + e^{a_{i+1}} + ... + e^{a_{M-1}}/2);
    # the last entry is -inf (empty integral), by construction of log1p(-1).
    S = np.logaddexp.accumulate(a[::-1])[::-1]
    with np.errstate(divide="ignore"):
        corr = np.log1p(-(0.5 * np.exp(a - S) + 0.5 * np.exp(a[-1] - S)))
    return math.log(dy) + S + corr


def mean_exit_time_quadrature(
    potential: Potential,
    epsilon: float,
    y_upper: Optional[float] = None,
    *,
    y_start: Optional[float] = None,
    y_absorb: Optional[float] = None,
    rtol: float = 1e-7,
    n0: int = 2000,
    max_doublings: int = 9,
) -> MeanExitTime:
    """Evaluate E[tau] = (1/eps) iint exp((F(z) - F(y))/eps) dy dz exactly.

    The outer variable z runs over [y_absorb, y_start] (defaulting to the
    potential's wells) and the inner over [z, y_upper]; both integrals use
    composite trapezoid on a shared uniform grid, with all sums carried in
    log space.  The grid is doubled until the log-value moves by less than
    ``rtol`` (equivalently: relative change of the value).  The truncation
    of the infinite upper limit is certified against the linear tail
    minorant F(y) >= g*y + C:

        tail <= (span/g) * exp((max_z F - g*y_upper - C)/eps),

    and an error is raised when the certificate exceeds 1e-6 of the value.
    """
    if epsilon <= 0.0:
        raise ValueError("epsilon must be positive")
    y0 = potential.wells[0] if y_absorb is None and potential.wells else y_absorb
    y1 = potential.wells[1] if y_start is None and potential.wells else y_start
    if y0 is None or y1 is None:
        raise MetastabilityError(
            "no wells identified; pass y_start and y_absorb explicitly"
        )
    y_up = float(potential.y[-1]) if y_upper is None else float(y_upper)
    if not y0 < y1 < y_up:
        raise ValueError("need y_absorb < y_start < y_upper")
    if y0 < potential.y[0] - 1e-12 or y_up > potential.y[-1] + 1e-12:
        raise ValueError("integration range leaves the potential grid")
    minorant = potential.growth_minorant
    if minorant is None:
        raise MetastabilityError(
            "potential has no certified tail growth; extend the grid past y = 1"
        )
    g, C = minorant

    spl = potential._spline
    span = y1 - y0
    nz = int(n0)
    log_eps = math.log(epsilon)
    prev = None
    log_value = math.nan
    n_used = nz
    refinements = 0
    converged = False
    for refinements in range(max_doublings + 1):
        dy = span / nz
        n_tail = max(1, math.ceil((y_up - y1) / dy - 1e-12))
        grid = y0 + dy * np.arange(nz + n_tail + 1)
        Fg = spl(grid)
        logG = _log_trapz_suffix(-Fg / epsilon, dy)
        c = Fg[: nz + 1] / epsilon + logG[: nz + 1]
        w = np.full(nz + 1, math.log(dy))
        w[0] += math.log(0.5)
        w[-1] += math.log(0.5)
        m0 = float(np.max(c + w))
        n_used = nz
        new_log = m0 + math.log(float(np.sum(np.exp(c + w - m0)))) - log_eps
        delta = math.inf if prev is None else abs(new_log - prev)
        prev = log_value = new_log
        if delta <= rtol:
            converged = True
            break
        nz *= 2
    if not converged:
        logger.warning(
            "exit-time quadrature did not reach rtol=%g after %d doublings",
            rtol,
            max_doublings,
        )

    Fmax = float(np.max(Fg[: n_used + 1]))
    log_bound = math.log(span / g) + (Fmax - g * float(grid[-1]) - C) / epsilon
    if log_bound > math.log(1e-6) + log_value:
        raise MetastabilityError(
            f"truncation bound {math.exp(min(log_bound, 700.0)):.3e} exceeds "
            f"1e-6 of the value; raise y_upper above {y_up:g}"
        )
    with np.errstate(over="ignore"):
        value = float(np.exp(log_value))
    return MeanExitTime(
        value=value,
        log_value=float(log_value),
        epsilon=float(epsilon),
        y_start=float(y1),
        y_absorb=float(y0),
        y_upper=float(grid[-1]),
        truncation_bound=float(math.exp(min(log_bound, 700.0))),
        n_panels=n_used,
        refinements=refinements,
        converged=converged,
    )


@dataclasses.dataclass(frozen=True)
class ExitSample:
    """Monte-Carlo first-hitting-time sample with its step-size control."""

    mean: float
    stderr: float
    n_paths: int
    n_absorbed: int
    n_censored: int
    diverged: bool
    dt: float
    t_cap: float
    seed: int
    control_mean: float
    control_stderr: float
    control_n: int
    step_bias_flagged: bool


def _run_em(valuefn, params, curve, y_start, y_absorb, dt, n_paths, rng, t_cap):
    """Euler-Maruyama first-hitting times in log coordinates (vectorized)."""
    sigma = valuefn.sigma
    b = params.b
    gx = valuefn.grid.x
    gvp = valuefn.Vp
    y_max = math.log(valuefn.grid.x_max)
    sdt = sigma * math.sqrt(dt)
    max_steps = int(math.ceil(t_cap / dt))

    y = np.full(n_paths, y_start)
    idx = np.arange(n_paths)
    times = np.full(n_paths, np.nan)
    for step in range(1, max_steps + 1):
        x = np.exp(y)
        vp = np.interp(x, gx, gvp)
        f = -1.0 / vp - b * x + curve.r(x)
        y += (f / x - 0.5 * sigma * sigma) * dt + sdt * rng.standard_normal(y.size)
        np.minimum(y, y_max, out=y)  # reflect the (never-reached) outer cap
        hit = y <= y_absorb
        if hit.any():
            times[idx[hit]] = step * dt
            keep = ~hit
            y = y[keep]
            idx = idx[keep]
            if idx.size == 0:
                break
    absorbed = np.isfinite(times)
    t = times[absorbed]
    n_abs = int(absorbed.sum())
    if n_abs == 0:
        return math.inf, math.nan, 0, n_paths
    mean = float(np.mean(t))
    stderr = float(np.std(t, ddof=1) / math.sqrt(n_abs)) if n_abs > 1 else math.nan
    return mean, stderr, n_abs, n_paths - n_abs


def simulate_exit(
    valuefn: ValueFunction,
    params: LakeParams,
    curve: RecyclingCurve,
    x_start: float,
    x_absorb: float,
    dt: float = 1e-3,
    n_paths: int = 10_000,
    seed: int = 0,
    *,
    t_cap: float = 400.0,
    control_fraction: float = 0.1,
) -> ExitSample:
    """Sample the first hitting time of ``x_absorb`` from ``x_start``.

    Paths follow Euler-Maruyama in log coordinates (x = e^y stays positive,
    so the degenerate boundary of the original SDE is never touched), driven
    by a counter-based Philox stream split deterministically from ``seed``.
    A control run on ``control_fraction`` of the paths at dt/2 re-estimates
    the mean; disagreement beyond two combined standard errors sets
    ``step_bias_flagged``.  Censoring (paths alive at ``t_cap``) above 1% is
    an error — except for sigma = 0, which is allowed as a diagnostic and
    returns an all-censored record with ``diverged`` set.
    """
    if not 0.0 < x_absorb < x_start:
        raise ValueError("need 0 < x_absorb < x_start")
    if dt <= 0.0 or n_paths <= 0:
        raise ValueError("dt and n_paths must be positive")
    sigma = valuefn.sigma
    if sigma == 0.0:
        # zero noise from a basin interior: the flow never reaches x_absorb
        return ExitSample(
            mean=math.inf,
            stderr=math.nan,
            n_paths=n_paths,
            n_absorbed=0,
            n_censored=n_paths,
            diverged=True,
            dt=dt,
            t_cap=t_cap,
            seed=seed,
            control_mean=math.nan,
            control_stderr=math.nan,
            control_n=0,
            step_bias_flagged=False,
        )

    y_start, y_absorb = math.log(x_start), math.log(x_absorb)
    ss_main, ss_ctrl = np.random.SeedSequence(seed).spawn(2)
    rng_main = np.random.Generator(np.random.Philox(ss_main))
    mean, stderr, n_abs, n_cen = _run_em(
        valuefn, params, curve, y_start, y_absorb, dt, n_paths, rng_main, t_cap
    )
    if n_cen > 0.01 * n_paths:
        raise MetastabilityError(
            f"{n_cen}/{n_paths} paths censored at t_cap={t_cap:g}; raise the cap"
        )
    n_ctrl = max(2, int(math.ceil(control_fraction * n_paths)))
    rng_ctrl = np.random.Generator(np.random.Philox(ss_ctrl))
    c_mean, c_stderr, c_abs, c_cen = _run_em(
        valuefn, params, curve, y_start, y_absorb, 0.5 * dt, n_ctrl, rng_ctrl, t_cap
    )
    flagged = False
    if np.isfinite(c_stderr) and np.isfinite(stderr):
        flagged = abs(mean - c_mean) > 2.0 * math.hypot(stderr, c_stderr)
        if flagged:
            logger.warning(
                "dt/2 control mean %.4f vs %.4f at dt=%g: possible step bias",
                c_mean,
                mean,
                dt,
            )
    return ExitSample(
        mean=mean,
        stderr=stderr,
        n_paths=n_paths,
        n_absorbed=n_abs,
        n_censored=n_cen,
        diverged=False,
        dt=dt,
        t_cap=t_cap,
        seed=seed,
        control_mean=c_mean,
        control_stderr=c_stderr,
        control_n=c_abs,
        step_bias_flagged=flagged,
    )


@dataclasses.dataclass(frozen=True)
class ExitTimeReport:
    """One sigma rung: quadrature (and optional MC) against the limit target."""

    sigma: float
    epsilon: float
    tau_quadrature: float
    tau_mc: Optional[float]
    tau_mc_stderr: Optional[float]
    eps_log_tau: float
    barrier_height: float  # the deterministic barrier dF0, the eps -> 0 target
    truncation_error_bound: float


@dataclasses.dataclass(frozen=True)
class ArrheniusReport:
    rows: tuple
    delta_F0: float
    deviations: tuple  # |eps ln tau - dF0| per rung
    fit_slope: Optional[float]
    fit_intercept: Optional[float]
    intercept_rel_err: Optional[float]


def arrhenius_estimate(
    params: LakeParams,
    curve: RecyclingCurve,
    sigma_ladder: Sequence[float],
    *,
    x_max: float = 20.0,
    n: int = 4096,
    y_grid: Optional[np.ndarray] = None,
    rtol: float = 1e-7,
    with_mc: bool = False,
    mc_paths: int = 2000,
    mc_dt: float = 1e-3,
    seed: int = 0,
) -> ArrheniusReport:
    """Quadrature exit times along a sigma ladder against the Arrhenius limit.

    Per rung: solve the HJB equation, build F_sigma, and evaluate
    ``eps*ln E[tau]`` with eps = sigma^2/2 between the fixed saddle anchors
    (F_sigma may have lost its own double well; the exact exit integral does
    not care).  The deterministic barrier dF0 comes from the Pontryagin
    candidate's potential.  A linear fit of eps*ln tau against eps supplies
    the extrapolated eps -> 0 intercept; rungs that fail numerically are
    logged and skipped.
    """
    sig = [float(s) for s in sigma_ladder]
    if len(sig) == 0:
        raise ValueError("empty sigma ladder")
    if any(s2 >= s1 for s1, s2 in zip(sig, sig[1:])):
        raise ValueError("sigma ladder must be strictly decreasing")

    cand = build_candidate(params, curve, x_max=x_max)
    saddle_x = sorted({br.equilibrium.x for br in cand.branches})
    y_absorb, y_start = (math.log(saddle_x[0]), math.log(saddle_x[-1]))
    gridspec = GridSpec(x_max=x_max, n=n)
    if y_grid is None:
        y_grid = default_y_grid(x_max)
    pot0 = build_potential(
        from_candidate(cand, gridspec), params, curve, y_grid, require_double_well=True
    )
    dF0 = pot0.barrier_height

    rows = []
    for s in sig:
        try:
            ps = dataclasses.replace(params, sigma=s)
            vf, _ = solve_hjb(ps, curve, gridspec)
            pot = build_potential(vf, params, curve, y_grid, require_double_well=False)
            met = mean_exit_time_quadrature(
                pot, 0.5 * s * s, y_start=y_start, y_absorb=y_absorb, rtol=rtol
            )
            tau_mc = mc_err = None
            if with_mc:
                es = simulate_exit(
                    vf, params, curve, saddle_x[-1], saddle_x[0],
                    dt=mc_dt, n_paths=mc_paths, seed=seed,
                )
                tau_mc, mc_err = es.mean, es.stderr
            rows.append(
                ExitTimeReport(
                    sigma=s,
                    epsilon=0.5 * s * s,
                    tau_quadrature=met.value,
                    tau_mc=tau_mc,
                    tau_mc_stderr=mc_err,
                    eps_log_tau=0.5 * s * s * met.log_value,
                    barrier_height=dF0,
                    truncation_error_bound=met.truncation_bound,
                )
            )
        except (RuntimeError, ValueError) as exc:
            logger.error("sigma=%g rung failed: %s; continuing ladder", s, exc)
    if len(rows) == 1:
        logger.warning("single-rung ladder: no extrapolation performed")
    slope = intercept = rel = None
    if len(rows) >= 2:
        eps = np.array([r.epsilon for r in rows])
        elt = np.array([r.eps_log_tau for r in rows])
        slope, intercept = (float(v) for v in np.polyfit(eps, elt, 1))
        rel = (intercept - dF0) / dF0
    return ArrheniusReport(
        rows=tuple(rows),
        delta_F0=float(dF0),
        deviations=tuple(abs(r.eps_log_tau - dF0) for r in rows),
        fit_slope=slope,
        fit_intercept=intercept,
        intercept_rel_err=rel,
    )


@dataclasses.dataclass(frozen=True)
class PathRecord:
    """One sampled trajectory of the controlled state."""

    t: np.ndarray
    x: np.ndarray
    x_start: float
    sigma: float


def simulate_paths(
    valuefn: ValueFunction,
    params: LakeParams,
    curve: RecyclingCurve,
    x_starts: Sequence[float],
    horizon: float,
    dt: float = 1e-3,
    seed: int = 0,
    *,
    sample_every: int = 100,
) -> list:
    """Trajectories of the optimally controlled lake from several starts.

    sigma = 0 integrates the deterministic feedback flow with an adaptive
    Runge-Kutta method; sigma > 0 runs Euler-Maruyama in log coordinates,
    decimated to every ``sample_every``-th step, one spawned Philox stream
    per start so records are independent of batching.
    """
    starts = [float(x0) for x0 in x_starts]
    if any(x0 <= 0.0 for x0 in starts):
        raise ValueError("starts must be positive")
    sigma = valuefn.sigma
    records = []
    if sigma == 0.0:

        def rhs(t, xv):
            x = xv[0]
            u = -1.0 / float(valuefn.derivative(x))
            return [u - params.b * x + curve.r(x)]

        t_eval = np.linspace(0.0, horizon, 1001)
        for x0 in starts:
            sol = solve_ivp(
                rhs, (0.0, horizon), [x0], t_eval=t_eval, rtol=1e-9, atol=1e-12,
                method="RK45",
            )
            if not sol.success:
                raise RuntimeError(f"deterministic path from {x0:g} failed: {sol.message}")
            records.append(PathRecord(t=sol.t, x=sol.y[0], x_start=x0, sigma=0.0))
        return records

    n_steps = int(math.ceil(horizon / dt))
    n_rec = n_steps // sample_every
    y_max = math.log(valuefn.grid.x_max)
    gx, gvp = valuefn.grid.x, valuefn.Vp
    sdt = sigma * math.sqrt(dt)
    streams = np.random.SeedSequence(seed).spawn(len(starts))
    for x0, ss in zip(starts, streams):
        rng = np.random.Generator(np.random.Philox(ss))
        y = math.log(x0)
        ts = np.empty(n_rec + 1)
        xs = np.empty(n_rec + 1)
        ts[0], xs[0] = 0.0, x0
        k = 0
        noise = None
        for step in range(1, n_steps + 1):
            if step % 100_000 == 1 or noise is None:
                noise = rng.standard_normal(min(100_000, n_steps - step + 1))
                ni = 0
            x = math.exp(y)
            vp = float(np.interp(x, gx, gvp))
            f = -1.0 / vp - params.b * x + float(curve.r(x))
            y += (f / x - 0.5 * sigma * sigma) * dt + sdt * noise[ni]
            ni += 1
            if y > y_max:
                y = y_max
            if step % sample_every == 0:
                k += 1
                ts[k], xs[k] = step * dt, math.exp(y)
        records.append(PathRecord(t=ts[: k + 1], x=xs[: k + 1], x_start=x0, sigma=sigma))
    return records
