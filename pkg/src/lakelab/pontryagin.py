"""Phase-plane analysis of the deterministic lake: equilibria, stable
manifolds and the candidate value function.

The Pontryagin system for the undiscounted state/control pair is

    dx/dt = f(x, u) = u - b*x + r(x)
    du/dt = g(x, u) = 2*c*x*u**2 - (rho + b - r'(x))*u,

whose interior equilibria solve ``u = b*x - r(x)`` together with
``u = g1(x) = (rho + b - r'(x))/(2*c*x)``.  In the bistable regime the root
pattern is saddle / vortex / saddle; integrating the saddles' stable manifolds
backwards in time and accumulating

    J_P(x) = J_P(x0) - int_{x0}^{x} 1/u(k) dk,
    J_P(x0) = (ln(u0) - c*x0**2) / rho,

yields one value branch per manifold arm.  Where the branches overlap, the
upper envelope is the candidate value function and the crossing abscissa is
the Skiba point at which the optimal policy jumps.
"""
from __future__ import annotations

import dataclasses
import functools
import logging
import math
from typing import Optional, Sequence

import numpy as np
from scipy.integrate import solve_ivp
from scipy.interpolate import CubicHermiteSpline
from scipy.optimize import brentq

from .model import (
    DomainError,
    LakeParams,
    PhasePoint,
    RecyclingCurve,
    far_field_coefficient,
)

__all__ = [
    "Equilibrium",
    "ManifoldBranch",
    "SkibaPoint",
    "CandidateValue",
    "TOWARD_SMALLER_X",
    "TOWARD_LARGER_X",
    "find_equilibria",
    "classify",
    "stable_manifold",
    "candidate_value",
    "build_candidate",
    "quadratic_lower_bound_check",
]

logger = logging.getLogger(__name__)

TOWARD_SMALLER_X = "toward_smaller_x"
TOWARD_LARGER_X = "toward_larger_x"

_SEED_OFFSET = 1e-6
_U_FLOOR = 1e-8


@dataclasses.dataclass(frozen=True)
class Equilibrium:
    """An interior rest point of the state/control flow with its local data."""

    x: float
    u: float
    jacobian: np.ndarray
    eigenvalues: tuple  # (lam_minus, lam_plus), sorted by real part
    kind: str  # "saddle" | "vortex" | "node"
    stable_slope: Optional[float]  # du/dx of the stable eigenvector, saddles only

    @property
    def point(self) -> PhasePoint:
        return PhasePoint(self.x, self.u)


@dataclasses.dataclass(frozen=True)
class ManifoldBranch:
    """One arm of a saddle's stable manifold, sampled with increasing x.

    ``J`` holds the accumulated candidate value along the arm; it is integrated
    together with the manifold itself (dJ = -dx/u), so its accuracy follows the
    integrator tolerance rather than a sample-level quadrature rule.
    ``u_prime`` holds du/dx = g/f at the samples (the stable-eigenvector slope
    at the saddle itself), enabling cubic Hermite interpolation whose error is
    O(step^4) even where the adaptive samples are widely spaced in x.
    ``quad_gap`` records the discrepancy against a composite trapezoid on the
    same samples (a Richardson-style consistency diagnostic).
    """

    equilibrium: Equilibrium
    direction: str
    x: np.ndarray
    u: np.ndarray
    J: np.ndarray
    u_prime: np.ndarray
    terminated_by: str  # "x_lo" | "x_hi" | "u_floor" | "fold" | "t_end"
    fold_x: Optional[float]
    quad_gap: float

    def __post_init__(self) -> None:
        dx = np.diff(self.x)
        if not np.all(dx > 0.0):
            raise ValueError("manifold samples must be strictly increasing in x")
        if not np.all(self.u > 0.0):
            raise ValueError("manifold control must stay positive")
        if not np.all(np.diff(self.J) < 0.0):
            raise ValueError("J_P must be strictly decreasing in x")

    @functools.cached_property
    def _finite(self) -> np.ndarray:
        # A fold endpoint has f = 0 and a genuinely unbounded du/dx; the graph
        # over x ends there, so splines are built on the finite-slope samples.
        return np.isfinite(self.u_prime)

    @functools.cached_property
    def _spline_u(self):
        m = self._finite
        return CubicHermiteSpline(self.x[m], self.u[m], self.u_prime[m])

    @functools.cached_property
    def _spline_J(self):
        m = self._finite
        return CubicHermiteSpline(self.x[m], self.J[m], -1.0 / self.u[m])

    def interp_u(self, x):
        return self._spline_u(x)

    def interp_J(self, x):
        return self._spline_J(x)


@dataclasses.dataclass(frozen=True)
class SkibaPoint:
    """Indifference point where the left and right value branches cross."""

    x: float
    J: float
    gap: float  # |J_left - J_right| at x, after bisection
    u_left: float
    u_right: float
    vp_left: float
    vp_right: float
    vpp_left: float
    vpp_right: float


@dataclasses.dataclass(frozen=True)
class _EnvelopeSide:
    """Complete sample record of one side of the envelope (one saddle's arms)."""

    x: np.ndarray
    u: np.ndarray
    J: np.ndarray
    u_prime: np.ndarray

    @functools.cached_property
    def spline_J(self):
        return CubicHermiteSpline(self.x, self.J, -1.0 / self.u)

    @functools.cached_property
    def spline_u(self):
        return CubicHermiteSpline(self.x, self.u, self.u_prime)


@dataclasses.dataclass(frozen=True)
class CandidateValue:
    """Upper envelope of the manifold value branches on [0, x_max].

    ``x``/``u``/``J`` sample the envelope with increasing x; when a Skiba point
    exists it appears twice, once with each side's control, because the optimal
    policy is set-valued there.  ``threshold_x`` is set instead of ``skiba``
    when the branches abut at a repelling equilibrium without overlapping.
    Evaluation interpolates each side with cubic Hermite splines (derivatives
    J' = -1/u and u' = g/f are known exactly at the samples), switching sides
    at the Skiba/threshold abscissa.
    """

    branches: tuple
    x: np.ndarray
    u: np.ndarray
    J: np.ndarray
    skiba: Optional[SkibaPoint]
    threshold_x: Optional[float]
    sides: tuple = ()

    @property
    def _split_x(self) -> Optional[float]:
        if self.skiba is not None:
            return self.skiba.x
        return self.threshold_x

    def _eval(self, x, attr):
        x = np.asarray(x, dtype=float)
        if len(self.sides) == 1:
            out = getattr(self.sides[0], attr)(x)
        else:
            left, right = self.sides
            out = np.where(
                x < self._split_x, getattr(left, attr)(x), getattr(right, attr)(x)
            )
        return float(out) if out.ndim == 0 else out

    def value(self, x):
        return self._eval(x, "spline_J")

    def policy(self, x):
        """Optimal loading at x (right-continuous at the Skiba point)."""
        return self._eval(x, "spline_u")

    def derivative(self, x):
        """V'(x) = -1/u along the candidate policy."""
        return -1.0 / self.policy(x)


def _phi(params: LakeParams, curve: RecyclingCurve, x):
    """Root function whose zeros are the interior equilibria."""
    x = np.asarray(x, dtype=float)
    return (params.b * x - curve.r(x)) - (params.rho + params.b - curve.r_prime(x)) / (
        2.0 * params.c * x
    )


def find_equilibria(
    params: LakeParams,
    curve: RecyclingCurve,
    x_max: float,
    n_scan: int = 100_000,
) -> list:
    """Locate and classify all interior equilibria with x in (0, x_max].

    A sign scan of the root function on an ``n_scan``-point grid brackets the
    roots and each bracket is polished by Brent's method.  Roots with
    ``u0 = b*x0 - r(x0) <= 0`` are outside the admissible control range; they
    are logged and skipped rather than raised.
    """
    if x_max <= 0.0:
        raise ValueError("x_max must be positive")
    xs = np.linspace(1e-6, x_max, n_scan)
    vals = _phi(params, curve, xs)
    roots = []
    for i in range(n_scan - 1):
        a, fb = xs[i], vals[i + 1]
        fa = vals[i]
        if fa == 0.0:
            roots.append(a)
        elif fa * fb < 0.0:
            roots.append(brentq(lambda x: _phi(params, curve, x), a, xs[i + 1],
                                xtol=1e-14, rtol=8.9e-16))
    if vals[-1] == 0.0:
        roots.append(xs[-1])

    out = []
    for x0 in roots:
        if out and abs(x0 - out[-1]) <= 1e-8:
            continue
        u0 = params.b * x0 - curve.r(x0)
        if u0 <= 0.0:
            logger.warning("equilibrium candidate x0=%.9g has u0=%.3g <= 0; inadmissible", x0, u0)
            continue
        out.append(x0)
    return [classify(params, curve, PhasePoint(x0, params.b * x0 - curve.r(x0))) for x0 in out]


def classify(params: LakeParams, curve: RecyclingCurve, point: PhasePoint) -> Equilibrium:
    """Classify a rest point via the analytic Jacobian of (f, g).

    The point must satisfy both equilibrium conditions to 1e-10.  Eigenvalues
    come from the 2x2 characteristic polynomial in closed form; a negative
    determinant means a saddle, a negative discriminant a vortex, anything
    else a node.  For saddles the stable eigenvector is (1, k) with
    ``k = b - r'(x0) + lam_minus``.
    """
    x0, u0 = point.x, point.u
    res1 = abs(u0 - (params.b * x0 - curve.r(x0)))
    res2 = abs(_phi(params, curve, x0))
    if max(res1, res2) > 1e-10:
        raise ValueError(
            f"(x0, u0) = ({x0!r}, {u0!r}) is not an equilibrium "
            f"(residuals {res1:.3e}, {res2:.3e} exceed 1e-10)"
        )
    rp = float(curve.r_prime(x0))
    rpp = float(curve.r_second(x0))
    j11 = -params.b + rp
    j12 = 1.0
    j21 = rpp * u0 + 2.0 * params.c * u0 * u0
    j22 = -(params.b + params.rho - rp) + 4.0 * params.c * x0 * u0
    jac = np.array([[j11, j12], [j21, j22]])

    tr = j11 + j22
    det = j11 * j22 - j12 * j21
    disc = tr * tr - 4.0 * det
    if disc >= 0.0:
        s = math.sqrt(disc)
        lam = (0.5 * (tr - s), 0.5 * (tr + s))
        kind = "saddle" if det < 0.0 else "node"
    else:
        s = math.sqrt(-disc)
        lam = (complex(0.5 * tr, -0.5 * s), complex(0.5 * tr, 0.5 * s))
        kind = "vortex"
    slope = params.b - rp + lam[0] if kind == "saddle" else None
    return Equilibrium(x=x0, u=u0, jacobian=jac, eigenvalues=lam, kind=kind, stable_slope=slope)


def stable_manifold(
    params: LakeParams,
    curve: RecyclingCurve,
    eq: Equilibrium,
    direction: str,
    x_bounds: tuple,
    *,
    rtol: float = 1e-10,
    max_step: float = 0.03,
    t_end: float = 4000.0,
) -> ManifoldBranch:
    """Trace one arm of a saddle's stable manifold by reversed-time integration.

    The seed sits ``1e-6 * max(1, x0)`` from the saddle along the stable
    eigenvector (1, k); integrating the reversed vector field -(f, g) pushes
    it away from the saddle along the manifold.  Integration stops when x
    leaves ``x_bounds``, when u falls under 1e-8, or at a fold (f = 0, where
    the arm ceases to be a graph over x).  The accumulated value J rides along
    as a third component, dJ/dtau = f/u.

    Returns the arm as a strictly x-monotone record, saddle point included.
    """
    if eq.kind != "saddle":
        raise ValueError(f"stable manifold requires a saddle, got {eq.kind!r}")
    if direction not in (TOWARD_SMALLER_X, TOWARD_LARGER_X):
        raise ValueError(f"unknown direction {direction!r}")
    lo, hi = x_bounds
    if not (lo < eq.x < hi or lo <= eq.x <= hi):
        raise ValueError("x_bounds must contain the saddle")

    x0, u0, k = eq.x, eq.u, eq.stable_slope
    sgn = -1.0 if direction == TOWARD_SMALLER_X else 1.0
    delta = sgn * _SEED_OFFSET * max(1.0, x0)
    J0 = (math.log(u0) - params.c * x0 * x0) / params.rho

    b, c, rho = params.b, params.c, params.rho
    r, rp = curve.r, curve.r_prime

    def rhs(t, z):
        x, u, _ = z
        xe = x if x > 0.0 else 0.0
        f = u - b * x + r(xe)
        g = 2.0 * c * xe * u * u - (rho + b - rp(xe)) * u
        return (-f, -g, f / u)

    def ev_lo(t, z):
        return z[0] - lo

    def ev_hi(t, z):
        return z[0] - hi

    def ev_floor(t, z):
        return z[1] - _U_FLOOR

    def ev_fold(t, z):
        return z[1] - b * z[0] + r(z[0] if z[0] > 0.0 else 0.0)

    events = [ev_lo, ev_hi, ev_floor, ev_fold]
    for ev in events:
        ev.terminal = True

    z0 = (x0 + delta, u0 + delta * k, J0 - delta / u0)
    sol = solve_ivp(rhs, (0.0, t_end), z0, method="DOP853", rtol=rtol, atol=rtol * 1e-2,
                    events=events, max_step=max_step)
    if not sol.success:
        raise RuntimeError(f"manifold integration failed: {sol.message}")
    names = ("x_lo", "x_hi", "u_floor", "fold")
    hit = [n for n, te in zip(names, sol.t_events) if len(te)]
    terminated_by = hit[0] if hit else "t_end"

    xs = np.concatenate(([x0], sol.y[0]))
    us = np.concatenate(([u0], sol.y[1]))
    Js = np.concatenate(([J0], sol.y[2]))
    # drop any post-event overshoot that broke monotonicity in x
    dx = np.diff(xs) * sgn
    bad = np.nonzero(dx <= 0.0)[0]
    if bad.size:
        stop = bad[0] + 1
        xs, us, Js = xs[:stop], us[:stop], Js[:stop]
    xs = np.clip(xs, lo, hi)  # event localisation can overshoot the bound by ~1e-15
    # manifold slope du/dx = g/f at the samples; at the saddle itself f = g = 0
    # and the limit is the stable-eigenvector slope k
    xe = np.maximum(xs, 0.0)
    fs = us - b * xs + r(xe)
    gs = 2.0 * c * xe * us * us - (rho + b - rp(xe)) * us
    with np.errstate(divide="ignore", invalid="ignore"):
        ups = gs / fs
    ups[0] = k
    if sgn < 0.0:
        xs, us, Js, ups = xs[::-1], us[::-1], Js[::-1], ups[::-1]

    # Richardson-style diagnostic: trapezoid on the same samples vs integrated J
    trap = np.concatenate(([0.0], np.cumsum(0.5 * (1.0 / us[1:] + 1.0 / us[:-1]) * np.diff(xs))))
    anchor = int(np.argmin(np.abs(xs - x0)))
    J_trap = Js[anchor] - (trap - trap[anchor])
    quad_gap = float(np.max(np.abs(J_trap - Js)))

    fold_x = float(sol.y_events[3][0][0]) if terminated_by == "fold" else None
    return ManifoldBranch(
        equilibrium=eq,
        direction=direction,
        x=xs,
        u=us,
        J=Js,
        u_prime=ups,
        terminated_by=terminated_by,
        fold_x=fold_x,
        quad_gap=quad_gap,
    )


def _sigma0_second_derivative(params, curve, x, vp):
    """V'' from the once-differentiated stationary equation at sigma = 0."""
    num = (curve.r_prime(x) - (params.rho + params.b)) * vp - 2.0 * params.c * x
    den = params.b * x - curve.r(x) + 1.0 / vp
    return num / den


def candidate_value(
    params: LakeParams,
    curve: RecyclingCurve,
    branches: Sequence[ManifoldBranch],
    *,
    x_max: Optional[float] = None,
) -> CandidateValue:
    """Assemble the candidate value function as the upper envelope of branches.

    Branches are grouped by their source saddle into arms.  Two overlapping
    arms are resolved by locating the crossing of their J interpolants
    (bisection to 1e-10); non-overlapping arms are joined at the gap edge and
    reported as a threshold instead of a Skiba point.  Raises if the requested
    domain [0, x_max] is not covered.
    """
    if not branches:
        raise ValueError("no branches given")

    arms: dict = {}
    for br in branches:
        key = br.equilibrium.x
        arms.setdefault(key, []).append(br)
    merged = []
    for key in sorted(arms):
        grp = sorted(arms[key], key=lambda b: b.x[0])
        x = np.concatenate([g.x for g in grp])
        u = np.concatenate([g.u for g in grp])
        J = np.concatenate([g.J for g in grp])
        up = np.concatenate([g.u_prime for g in grp])
        order = np.argsort(x)
        x, u, J, up = x[order], u[order], J[order], up[order]
        keep = np.concatenate(([True], np.diff(x) > 0.0)) & np.isfinite(up)
        side = _EnvelopeSide(x=x[keep], u=u[keep], J=J[keep], u_prime=up[keep])
        merged.append((side, grp))
    if len(merged) > 2:
        raise ValueError(f"expected at most two saddle arms, got {len(merged)}")

    skiba = None
    threshold = None
    if len(merged) == 1:
        side, grp = merged[0]
        x, u, J = side.x, side.u, side.J
        allb = tuple(grp)
        sides = (side,)
    else:
        (left, gl), (right, gr) = merged
        allb = tuple(gl) + tuple(gr)
        sides = (left, right)
        lo = max(left.x[0], right.x[0])
        hi = min(left.x[-1], right.x[-1])
        if lo >= hi:
            threshold = 0.5 * (left.x[-1] + right.x[0])
            cut_l, cut_r = left.x <= threshold, right.x >= threshold
            x = np.concatenate([left.x[cut_l], right.x[cut_r]])
            u = np.concatenate([left.u[cut_l], right.u[cut_r]])
            J = np.concatenate([left.J[cut_l], right.J[cut_r]])
        else:
            dJ = lambda z: float(left.spline_J(z) - right.spline_J(z))
            flo, fhi = dJ(lo), dJ(hi)
            if flo == 0.0:
                xstar = lo
            elif fhi == 0.0:
                xstar = hi
            elif flo * fhi > 0.0:
                raise ValueError(
                    "branch values do not cross inside their overlap "
                    f"[{lo:.6g}, {hi:.6g}]; cannot place an indifference point"
                )
            else:
                a_, b_ = lo, hi
                while b_ - a_ > 1e-10:
                    m = 0.5 * (a_ + b_)
                    if flo * dJ(m) <= 0.0:
                        b_ = m
                    else:
                        a_ = m
                xstar = 0.5 * (a_ + b_)
            uL = float(left.spline_u(xstar))
            uR = float(right.spline_u(xstar))
            JL = float(left.spline_J(xstar))
            JR = float(right.spline_J(xstar))
            vpL, vpR = -1.0 / uL, -1.0 / uR
            skiba = SkibaPoint(
                x=xstar,
                J=0.5 * (JL + JR),
                gap=abs(JL - JR),
                u_left=uL,
                u_right=uR,
                vp_left=vpL,
                vp_right=vpR,
                vpp_left=float(_sigma0_second_derivative(params, curve, xstar, vpL)),
                vpp_right=float(_sigma0_second_derivative(params, curve, xstar, vpR)),
            )
            keep_l = left.x < xstar
            keep_r = right.x > xstar
            x = np.concatenate([left.x[keep_l], [xstar, xstar], right.x[keep_r]])
            u = np.concatenate([left.u[keep_l], [uL, uR], right.u[keep_r]])
            J = np.concatenate([left.J[keep_l], [skiba.J, skiba.J], right.J[keep_r]])

    if x_max is not None:
        if x[0] > 1e-6 or x[-1] < x_max - 1e-9:
            raise ValueError(
                f"candidate value covers [{x[0]:.3g}, {x[-1]:.3g}], "
                f"which misses the requested domain [0, {x_max:.3g}]"
            )
    return CandidateValue(
        branches=allb, x=x, u=u, J=J, skiba=skiba, threshold_x=threshold, sides=sides
    )


def build_candidate(
    params: LakeParams,
    curve: RecyclingCurve,
    x_max: float = 20.0,
) -> CandidateValue:
    """Full deterministic pipeline: equilibria, manifold arms, envelope.

    Convenience driver for the bistable (two-saddle) and single-saddle cases.
    """
    eqs = find_equilibria(params, curve, max(x_max, 4.0))
    saddles = [e for e in eqs if e.kind == "saddle"]
    if not saddles:
        raise ValueError("no saddle equilibria found; candidate value undefined")
    branches = []
    for i, s in enumerate(saddles):
        branches.append(stable_manifold(params, curve, s, TOWARD_SMALLER_X, (0.0, s.x)))
        hi = x_max if i == len(saddles) - 1 else 1.5 * x_max
        branches.append(stable_manifold(params, curve, s, TOWARD_LARGER_X, (s.x, hi)))
    return candidate_value(params, curve, branches, x_max=x_max)


@dataclasses.dataclass(frozen=True)
class QuadraticBoundReport:
    A: float
    max_increase: float  # of J + A x^2 between consecutive samples
    tail_ratio: float  # (V'(x_end)/x_end) / (-2A)
    x_end: float
    ok: bool


def quadratic_lower_bound_check(cv: CandidateValue, params: LakeParams) -> QuadraticBoundReport:
    """Check that J_P never falls below the far-field parabola -A*x**2.

    ``J + A*x**2`` must be non-increasing in x (A the deterministic far-field
    coefficient), and the scaled slope V'(x)/x must approach -2A; the latter is
    tested at the record's end and only meaningful for x_end >= 20.
    """
    A = params.c / (params.rho + 2.0 * params.b)
    gx = cv.J + A * cv.x**2
    max_inc = float(np.max(np.diff(gx))) if len(gx) > 1 else 0.0
    x_end = float(cv.x[-1])
    tail_ratio = float((-1.0 / cv.u[-1]) / x_end / (-2.0 * A))
    ok = max_inc <= 1e-9 and abs(tail_ratio - 1.0) <= 0.10
    return QuadraticBoundReport(A=A, max_increase=max_inc, tail_ratio=tail_ratio,
                                x_end=x_end, ok=ok)
