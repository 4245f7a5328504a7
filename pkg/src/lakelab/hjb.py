"""Monotone upwind solver for the stationary lake HJB equation.

For sigma > 0 the value function solves, on x > 0,

    rho*V - (r(x) - b*x)*V' + ln(-V') + c*x**2 + 1 - (sigma**2/2)*x**2*V'' = 0,

degenerating at x = 0 where no boundary data may be imposed: the optimal
drift points inward there (u > 0, r(0) = 0), so the equation itself holds
with a one-sided derivative.  The solver runs Howard policy iteration:

* policy evaluation solves the linear system
  ``rho*V = (u - b*x + r)*D_up V + ln(u) - c*x**2 + (sigma**2/2)*x**2*D2 V``
  with first-order upwinding on the sign of the total drift (ties take the
  forward difference) and centered second differences, by a direct
  tridiagonal factorization;
* policy improvement maximizes the discrete Hamiltonian per node over the
  sign-consistent candidates ``u = -1/(D_up V)`` for each upwind side and the
  zero-drift corner ``u = b*x - r(x)``, clipped below at 1e-10.  The naive
  update ``u = -1/(D_up V)`` with the side fixed by the current drift sign
  flip-flops at nodes whose optimal control sits at the corner; the argmax
  form is stationary there and keeps the scheme monotone.

At ``x_max`` a Neumann row imposes ``D V = -2*A*x_max`` with the far-field
coefficient ``A = c/(rho + 2b - sigma**2)``; the derivative asymptote is used
rather than the value to avoid the additive-constant ambiguity.  Iteration
stops when the nonlinear residual's sup norm falls under ``tol`` and the
policy moves by less than ``10*tol``.
"""
from __future__ import annotations

import dataclasses
from typing import Optional, Sequence

import numpy as np
from scipy.linalg import solve_banded

from .model import LakeParams, RecyclingCurve, far_field_coefficient
from .pontryagin import CandidateValue, build_candidate

__all__ = [
    "GridSpec",
    "ValueFunction",
    "SolveReport",
    "SolveError",
    "default_grid",
    "solve_hjb",
    "residual",
    "stationary_residual",
    "second_derivative_v2",
    "from_candidate",
    "viscosity_limit_check",
    "second_derivative_bounds_check",
]

U_FLOOR = 1e-10


class SolveError(RuntimeError):
    """Policy iteration failed; carries the residual history."""

    def __init__(self, message: str, residual_history: Sequence[float]):
        super().__init__(message)
        self.residual_history = list(residual_history)


@dataclasses.dataclass(frozen=True)
class GridSpec:
    """Uniform grid on [0, x_max] with n nodes (node 0 at x = 0)."""

    x_max: float
    n: int = 4096

    def __post_init__(self) -> None:
        if not self.x_max > 0.0:
            raise ValueError("x_max must be positive")
        if self.n < 64:
            raise ValueError("need at least 64 nodes")

    @property
    def h(self) -> float:
        return self.x_max / (self.n - 1)

    @property
    def x(self) -> np.ndarray:
        return np.linspace(0.0, self.x_max, self.n)


def default_grid(params: LakeParams, curve: RecyclingCurve, n: int = 4096) -> GridSpec:
    """Default domain max(20, 4 * largest equilibrium), per the far-field checks."""
    from .pontryagin import find_equilibria

    search = 4.0 * _largest_balance_root(params, curve)
    eqs = find_equilibria(params, curve, search)
    x_top = max((e.x for e in eqs), default=search / 4.0)
    return GridSpec(x_max=max(20.0, 4.0 * x_top), n=n)


def _largest_balance_root(params: LakeParams, curve: RecyclingCurve) -> float:
    """Largest positive root of b*x = r(x), or 1.0 when the line clears the curve."""
    xs = np.linspace(1e-6, 1e3, 200_001)
    g = params.b * xs - curve.r(xs)
    sign_flips = np.nonzero(np.sign(g[:-1]) * np.sign(g[1:]) < 0)[0]
    if not sign_flips.size:
        return 1.0
    i = sign_flips[-1]
    lo, hi = xs[i], xs[i + 1]
    for _ in range(80):
        mid = 0.5 * (lo + hi)
        if (params.b * lo - curve.r(lo)) * (params.b * mid - curve.r(mid)) <= 0.0:
            hi = mid
        else:
            lo = mid
    return 0.5 * (lo + hi)


@dataclasses.dataclass(frozen=True)
class ValueFunction:
    """A value function on a grid, from either pipeline.

    ``Vp`` holds the derivative estimates that define the feedback policy
    ``u = -1/Vp``.  For provenance ``"pontryagin"`` the exact branch
    interpolants are kept in ``candidate`` and used by :meth:`derivative`, so
    the policy switch at the Skiba point is not smeared by the grid.
    """

    grid: GridSpec
    V: np.ndarray
    Vp: np.ndarray
    sigma: float
    provenance: str  # "pontryagin" | "hjb"
    skiba: Optional[float] = None
    candidate: Optional[CandidateValue] = None

    def __post_init__(self) -> None:
        if self.provenance not in ("pontryagin", "hjb"):
            raise ValueError(f"unknown provenance {self.provenance!r}")
        if np.any(np.diff(self.V) >= 0.0):
            raise ValueError("value function must be strictly decreasing")
        if np.any(self.Vp >= 0.0):
            raise ValueError("Vp must be negative everywhere")

    def value(self, x):
        return np.interp(x, self.grid.x, self.V)

    def derivative(self, x):
        if self.candidate is not None:
            return self.candidate.derivative(x)
        return np.interp(x, self.grid.x, self.Vp)


@dataclasses.dataclass(frozen=True)
class SolveReport:
    iterations: int
    residual_norm: float  # max_i |res_i|/scale_i, the convergence metric
    residual_norm_raw: float  # max_i |res_i| (fp floor ~ sigma^2 x_max^2 |V| eps/h^2)
    residual_history: tuple
    policy_change: float
    boundary_gap_value: float  # |ln(-Vp(0)) + rho V(0) + 1|
    boundary_gap_curvature: float  # relative error of discrete V''(0) vs -(rho+b-r'(0)) Vp(0)^2
    far_field_estimate: float  # -V(x_max)/x_max^2
    u_floor_hits: int


def solve_hjb(
    params: LakeParams,
    curve: RecyclingCurve,
    gridspec: Optional[GridSpec] = None,
    tol: float = 1e-9,
    max_iter: int = 200,
):
    """Solve the stationary HJB equation; returns (ValueFunction, SolveReport).

    Requires ``sigma > 0`` (the deterministic value comes from the phase-plane
    pipeline instead).  Raises :class:`SolveError` on non-convergence or when
    the policy floor is hit on more than 1% of nodes.
    """
    if params.sigma <= 0.0:
        raise ValueError("solve_hjb requires sigma > 0; use the Pontryagin candidate at sigma = 0")
    if gridspec is None:
        gridspec = default_grid(params, curve)
    x = gridspec.x
    h = gridspec.h
    n = gridspec.n
    b, c, rho = params.b, params.c, params.rho
    r_x = np.asarray(curve.r(x), dtype=float)
    diff = 0.5 * params.sigma**2 * x * x / (h * h)  # diffusion weight, zero at x = 0
    A = far_field_coefficient(params)
    neumann = -2.0 * A * gridspec.x_max

    w = b * x - r_x  # drift balance point: s = u - w
    u = np.full(n, rho)
    V = np.zeros(n)
    history = []
    floor_hits = 0
    policy_change = np.inf
    band = np.zeros((3, n))
    rhs = np.zeros(n)

    for iteration in range(1, max_iter + 1):
        s = u - w
        sp = np.maximum(s, 0.0)
        sm = np.minimum(s, 0.0)
        # rows 0..n-2: rho V - s+ D+V - s- D-V - diff*(V_{i+1} - 2V_i + V_{i-1}) = ln u - c x^2
        band[0, 1:] = (-diff - sp / h)[:-1]  # super-diagonal, eq i coupling to i+1
        band[1, :] = rho + 2.0 * diff + (sp - sm) / h
        band[2, :-1] = (-diff + sm / h)[1:]  # sub-diagonal, eq i coupling to i-1
        rhs[:] = np.log(u) - c * x * x
        # x_max row: backward-difference Neumann, (V_{n-1} - V_{n-2})/h = neumann
        band[1, -1] = 1.0 / h
        band[2, -2] = -1.0 / h
        rhs[-1] = neumann

        # Row equilibration: the diagonal spans ~rho to ~sigma^2 x_max^2/h^2;
        # dividing each row by it keeps the factorization's rounding noise out
        # of the policy feedback (u = -1/DV amplifies V noise by ~2u^2/h).
        d = band[1, :].copy()
        band[0, 1:] /= d[:-1]
        band[1, :] /= d
        band[2, :-1] /= d[1:]
        V = solve_banded((1, 1), band, rhs / d)

        u_new, floor_hits = _policy_improve(V, w, h, n)
        if floor_hits > 0.01 * n:
            raise SolveError(
                f"policy floor hit at {floor_hits}/{n} nodes; "
                "domain too small or parameters inadmissible",
                history,
            )

        res, scale = _residual_and_scale(params, curve, x, h, V, u_new)
        res_norm = float(np.max(np.abs(res[:-1]) / scale[:-1]))
        history.append(res_norm)
        policy_change = float(np.max(np.abs(u_new - u)))
        u = u_new
        if res_norm <= tol and policy_change <= 10.0 * tol:
            break
    else:
        raise SolveError(
            f"no convergence after {max_iter} iterations "
            f"(last residual {history[-1]:.3e})",
            history,
        )

    # Store Vp = -1/u so the feedback policy is recoverable exactly.  Wherever a
    # one-sided optimizer won this equals that upwind difference of V; at
    # zero-drift nodes (u = w) it is the consistent derivative estimate -1/w.
    vf = ValueFunction(grid=gridspec, V=V, Vp=-1.0 / u, sigma=params.sigma, provenance="hjb")
    gx = V + A * x * x
    if np.any(np.diff(gx) > 1e-7):
        raise SolveError("V + A x^2 is not non-increasing; far-field bound violated", history)

    rp0 = float(curve.r_prime(0.0))
    gap0 = abs(np.log(-vf.Vp[0]) + rho * V[0] + 1.0)
    v2_0 = (2.0 * V[0] - 5.0 * V[1] + 4.0 * V[2] - V[3]) / (h * h)
    v2_exact = -(rho + b - rp0) * vf.Vp[0] ** 2
    report = SolveReport(
        iterations=iteration,
        residual_norm=res_norm,
        residual_norm_raw=float(np.max(np.abs(res[:-1]))),
        residual_history=tuple(history),
        policy_change=policy_change,
        boundary_gap_value=float(gap0),
        boundary_gap_curvature=float(abs(v2_0 - v2_exact) / abs(v2_0)),
        far_field_estimate=float(-V[-1] / gridspec.x_max**2),
        u_floor_hits=floor_hits,
    )
    return vf, report


def _one_sided(V: np.ndarray, h: float, n: int):
    """Forward/backward first differences; each falls back to the other at its
    missing end so both arrays are defined at every node."""
    Dp = np.empty(n)
    Dp[:-1] = np.diff(V) / h
    Dp[-1] = (V[-1] - V[-2]) / h
    Dm = np.empty(n)
    Dm[1:] = np.diff(V) / h
    Dm[0] = Dp[0]
    return Dp, Dm


def _policy_improve(V: np.ndarray, w: np.ndarray, h: float, n: int):
    """Per-node maximizer of the discrete Hamiltonian

        phi(u) = (u - w)^+ D+V + (u - w)^- D-V + ln u,    w = b*x - r(x),

    whose drift term upwinds on the sign of s = u - w.  Three candidates per
    node: the forward-side optimizer -1/D+V (feasible when it gives s >= 0),
    the backward-side optimizer -1/D-V (feasible when s < 0 and w > 0), and
    the zero-drift corner u = w, where no derivative enters.  Picking the
    feasible argmax keeps the update sign-consistent, so the iteration cannot
    oscillate between upwind directions.  Returns (u, floor_hits)."""
    Dp, Dm = _one_sided(V, h, n)
    with np.errstate(divide="ignore", over="ignore", invalid="ignore"):
        uf = np.where(Dp < 0.0, -1.0 / Dp, np.nan)
        ub = np.where(Dm < 0.0, -1.0 / Dm, np.nan)
        ok_f = (Dp < 0.0) & (uf >= np.maximum(w, U_FLOOR))
        ok_b = (Dm < 0.0) & (ub <= w) & (ub >= U_FLOOR)
        ok_k = w >= U_FLOOR
        phi_f = np.where(ok_f, (uf - w) * Dp + np.log(np.where(ok_f, uf, 1.0)), -np.inf)
        phi_b = np.where(ok_b, (ub - w) * Dm + np.log(np.where(ok_b, ub, 1.0)), -np.inf)
        phi_k = np.where(ok_k, np.log(np.where(ok_k, w, 1.0)), -np.inf)
    cand = np.stack((uf, ub, np.asarray(w, dtype=float)))
    phi = np.stack((phi_f, phi_b, phi_k))
    best = np.argmax(phi, axis=0)
    u = cand[best, np.arange(n)]
    dead = ~np.isfinite(phi[best, np.arange(n)])
    u[dead] = U_FLOOR
    floor_hits = int(np.sum(dead | (u <= U_FLOOR)))
    return u, floor_hits


def _residual_and_scale(params, curve, x, h, V, u):
    """Discrete HJB residual under policy u, plus a per-row magnitude scale.

    Residual: ``rho*V - (u-w)^+ D+V - (u-w)^- D-V - ln(u) + c*x**2
    - (sigma^2/2) x^2 D2V`` with w = b*x - r(x); the last slot holds the
    Neumann gap.  Wherever u = -1/(D_up V) this reduces to the familiar form
    rho*V - (r-bx)*D_up V + ln(-D_up V) + c*x**2 + 1 - diffusion; at a
    zero-drift node (u = w) the derivative terms drop, as the scheme dictates.

    Scale: the componentwise backward-error denominator — the same terms with
    every difference operator replaced by the sum of the magnitudes of its
    inputs (plus 1) — so ``|res|/scale <= tol`` asserts each row is satisfied
    to a 1e-9 relative perturbation of its data.  The raw residual cannot
    reach small absolute tolerances on fine grids: the diffusion row weight
    grows like sigma^2 x_max^2 (n/x_max)^2, and float64 rounding of V alone
    leaves a floor of order ``(sigma^2 x^2/h^2)*4|V|*eps`` (about 1e-8 at the
    default resolution).
    """
    b, c, rho = params.b, params.c, params.rho
    n = len(x)
    w = b * x - np.asarray(curve.r(x), dtype=float)
    s = u - w
    Dp, Dm = _one_sided(V, h, n)
    D2 = np.zeros(n)
    D2[1:-1] = (V[2:] - 2.0 * V[1:-1] + V[:-2]) / (h * h)
    sp = np.maximum(s, 0.0)
    sm = np.minimum(s, 0.0)
    aV = np.abs(V)
    aDp = np.empty(n)
    aDp[:-1] = (aV[1:] + aV[:-1]) / h
    aDp[-1] = aDp[-2]
    aDm = np.empty(n)
    aDm[1:] = (aV[1:] + aV[:-1]) / h
    aDm[0] = aDp[0]
    aD2 = np.zeros(n)
    aD2[1:-1] = (aV[2:] + 2.0 * aV[1:-1] + aV[:-2]) / (h * h)
    with np.errstate(divide="ignore", invalid="ignore"):
        res = (
            rho * V
            - sp * Dp
            - sm * Dm
            - np.log(u)
            + c * x * x
            - 0.5 * params.sigma**2 * x * x * D2
        )
        scale = (
            rho * aV
            + sp * aDp
            - sm * aDm
            + np.abs(np.log(u))
            + c * x * x
            + 0.5 * params.sigma**2 * x * x * aD2
            + 1.0
        )
    A = far_field_coefficient(params)
    res[-1] = Dm[-1] - (-2.0 * A * x[-1])
    scale[-1] = aDm[-1] + abs(2.0 * A * x[-1]) + 1.0
    return res, scale


def _nonlinear_residual(params, curve, x, h, V, u):
    """Raw (unscaled) discrete residual; see :func:`_residual_and_scale`."""
    return _residual_and_scale(params, curve, x, h, V, u)[0]


def residual(
    valuefn: ValueFunction,
    params: LakeParams,
    curve: RecyclingCurve,
    scaled: bool = False,
) -> np.ndarray:
    """Recompute the discrete residual for a converged solve (diagnostic).

    Upwind directions follow the stored policy ``u = -1/Vp``; derivatives are
    rebuilt from V, so perturbing V perturbs the residual.  With ``scaled``
    each row is divided by the magnitude sum of its terms (the solver's
    convergence metric).
    """
    if valuefn.provenance != "hjb":
        raise ValueError("residual() expects an HJB-provenance value function")
    grid = valuefn.grid
    u = -1.0 / valuefn.Vp
    res, scale = _residual_and_scale(params, curve, grid.x, grid.h, valuefn.V, u)
    return res / scale if scaled else res


def stationary_residual(params, curve, x, V, Vp, V2=None):
    """Pointwise stationary-equation residual from given (V, V', V'') samples.

    ``rho*V - (r - b*x)*Vp + ln(-Vp) + c*x**2 + 1 - (sigma**2/2)*x**2*V2``;
    the diffusion term is dropped when V2 is None (sigma = 0 usage).
    """
    x = np.asarray(x, dtype=float)
    out = (
        params.rho * np.asarray(V, dtype=float)
        - (curve.r(x) - params.b * x) * Vp
        + np.log(-np.asarray(Vp, dtype=float))
        + params.c * x * x
        + 1.0
    )
    if V2 is not None:
        out = out - 0.5 * params.sigma**2 * x * x * np.asarray(V2, dtype=float)
    return out


def second_derivative_v2(valuefn: ValueFunction, params: LakeParams, curve: RecyclingCurve):
    """V'' recovered from the equation itself (valid for sigma > 0, x > 0).

    At x = 0 the equation degenerates; the classical limit
    ``V''(0) = -(rho + b - r'(0)) * V'(0)**2`` fills the first slot.
    """
    if valuefn.sigma <= 0.0:
        raise ValueError("equation-based V'' needs sigma > 0")
    x = valuefn.grid.x
    V, Vp = valuefn.V, valuefn.Vp
    out = np.empty_like(V)
    xi = x[1:]
    out[1:] = (
        2.0
        / valuefn.sigma**2
        * (
            params.rho * V[1:]
            + (params.b * xi - curve.r(xi)) * Vp[1:]
            + np.log(-Vp[1:])
            + 1.0
            + params.c * xi * xi
        )
        / (xi * xi)
    )
    out[0] = -(params.rho + params.b - float(curve.r_prime(0.0))) * Vp[0] ** 2
    return out


def from_candidate(cv: CandidateValue, gridspec: GridSpec, sigma: float = 0.0) -> ValueFunction:
    """Sample a Pontryagin candidate onto a uniform grid as a ValueFunction."""
    x = gridspec.x
    V = cv.value(x)
    Vp = cv.derivative(x)
    return ValueFunction(
        grid=gridspec,
        V=V,
        Vp=Vp,
        sigma=sigma,
        provenance="pontryagin",
        skiba=None if cv.skiba is None else cv.skiba.x,
        candidate=cv,
    )


@dataclasses.dataclass(frozen=True)
class ViscosityReport:
    sigmas: tuple
    distances: tuple
    interval: tuple
    non_increasing_with_slack: bool
    strictly_decreasing: bool


def viscosity_limit_check(
    params: LakeParams,
    curve: RecyclingCurve,
    sigmas: Sequence[float],
    compact_interval: tuple = (0.0, 3.0),
    gridspec: Optional[GridSpec] = None,
    candidate: Optional[CandidateValue] = None,
) -> ViscosityReport:
    """Solve along a decreasing sigma ladder and measure sup|V_sigma - J_P|.

    The vanishing-viscosity limit sends V_sigma to the deterministic value
    locally uniformly, so the distances should shrink along the ladder; a 10%
    slack guards the non-increase assertion against grid noise.
    """
    sig = tuple(float(s) for s in sigmas)
    if any(s2 >= s1 for s1, s2 in zip(sig, sig[1:])):
        raise ValueError("sigmas must be strictly decreasing")
    if any(not 0.0 < s for s in sig) or any(
        s**2 >= params.rho + 2.0 * params.b for s in sig
    ):
        raise ValueError("each sigma must lie in (0, sqrt(rho + 2b))")
    if gridspec is None:
        gridspec = default_grid(params, curve)
    if candidate is None:
        candidate = build_candidate(params, curve, x_max=gridspec.x_max)
    lo, hi = compact_interval
    mask = (gridspec.x >= lo) & (gridspec.x <= hi)
    xs = gridspec.x[mask]
    ref = candidate.value(xs)
    dists = []
    for s in sig:
        ps = dataclasses.replace(params, sigma=s)
        vf, _ = solve_hjb(ps, curve, gridspec)
        dists.append(float(np.max(np.abs(vf.value(xs) - ref))))
    non_inc = all(d2 <= 1.10 * d1 for d1, d2 in zip(dists, dists[1:]))
    strict = all(d2 < d1 for d1, d2 in zip(dists, dists[1:]))
    return ViscosityReport(
        sigmas=sig,
        distances=tuple(dists),
        interval=(lo, hi),
        non_increasing_with_slack=non_inc,
        strictly_decreasing=strict,
    )


@dataclasses.dataclass(frozen=True)
class SecondDerivativeReport:
    bracket: tuple  # (lower, upper) tail bounds for V''
    B_est: float  # empirical slope bound: V' >= -B x on the outer decade
    v2_tail_min: float
    v2_tail_max: float
    max_rel_gap_vs_fd: float  # eq-based V'' vs centered difference, tail nodes
    within_bracket: bool


def second_derivative_bounds_check(
    valuefn: ValueFunction, params: LakeParams, curve: RecyclingCurve
) -> SecondDerivativeReport:
    """Check the tail curvature bracket implied by the far-field bounds.

    On the outermost decade of the grid, V'' from the equation must lie in
    ``[2(-rho*A - b*B_est + c)/sigma**2, 2(-rho*A + c)/sigma**2]`` where
    ``B_est`` bounds the scaled slope -V'/x there, and must agree with a
    centered second difference of V to 5%.
    """
    grid = valuefn.grid
    x = grid.x
    v2 = second_derivative_v2(valuefn, params, curve)
    tail = x >= grid.x_max / 10.0
    B_est = float(np.max(-valuefn.Vp[tail] / x[tail]))
    A = far_field_coefficient(params)
    lower = 2.0 * (-params.rho * A - params.b * B_est + params.c) / valuefn.sigma**2
    upper = 2.0 * (-params.rho * A + params.c) / valuefn.sigma**2

    fd = (valuefn.V[2:] - 2.0 * valuefn.V[1:-1] + valuefn.V[:-2]) / grid.h**2
    inner_tail = tail[1:-1]
    rel = np.abs(v2[1:-1][inner_tail] - fd[inner_tail]) / np.abs(fd[inner_tail])
    v2_tail = v2[tail]
    within = bool(np.all(v2_tail >= lower - 1e-12) and np.all(v2_tail <= upper + 1e-12))
    return SecondDerivativeReport(
        bracket=(float(lower), float(upper)),
        B_est=B_est,
        v2_tail_min=float(np.min(v2_tail)),
        v2_tail_max=float(np.max(v2_tail)),
        max_rel_gap_vs_fd=float(np.max(rel)),
        within_bracket=within,
    )
