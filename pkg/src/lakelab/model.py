"""Shallow lake dynamics, parameters and Hamiltonians.

The state ``x >= 0`` is a stock of accumulated pollutant (phosphorus in the
classic eutrophication story), the control ``u > 0`` is the loading rate that
society chooses.  The stock evolves as

    dx = (u - b*x + r(x)) dt + sigma * x dW,

where ``b`` is the natural sedimentation/outflow rate and ``r`` is a bounded,
increasing *recycling curve* (internal loading released back from the
sediment).  Welfare accrues at rate ``ln(u) - c*x**2`` and is discounted at
``rho``, so the planner maximises

    E int_0^inf exp(-rho*t) * (ln(u_t) - c*x_t**2) dt.

Maximising the current-value Hamiltonian ``(u - b*x + r(x))*p + ln(u) - c*x**2``
over ``u`` at costate ``p < 0`` gives ``u = -1/p`` and the closed forms
implemented by :func:`hamiltonian` and :func:`log_hamiltonian` below.  The
module also carries the state/costate vector field used by the phase-plane
analysis in :mod:`lakelab.pontryagin`.
"""
from __future__ import annotations

import dataclasses
import math
from typing import Callable, Optional

import numpy as np

__all__ = [
    "LakeParams",
    "RecyclingCurve",
    "PhasePoint",
    "CurveError",
    "DomainError",
    "AUDIT_GRID",
    "hill_curve",
    "make_curve",
    "audit_curve",
    "drift",
    "g1",
    "costate_dynamics",
    "hamiltonian",
    "log_hamiltonian",
    "far_field_coefficient",
]


class DomainError(ValueError):
    """An argument left the admissible region (x < 0, u <= 0 or p >= 0)."""


class CurveError(ValueError):
    """A recycling curve failed its registration audit."""


@dataclasses.dataclass(frozen=True)
class LakeParams:
    """Model parameters.

    Attributes
    ----------
    b : float
        Sedimentation/outflow rate, ``b > 0``.
    c : float
        Weight of the quadratic pollution cost, ``c > 0``.
    rho : float
        Discount rate, ``rho > 0``.
    sigma : float
        Multiplicative noise level, ``sigma >= 0``.  The far-field quadratic
        bound requires ``sigma**2 < rho + 2*b``; stronger noise is rejected.
    """

    b: float
    c: float
    rho: float
    sigma: float = 0.0

    def __post_init__(self) -> None:
        for name in ("b", "c", "rho"):
            if not getattr(self, name) > 0.0:
                raise ValueError(f"LakeParams.{name} must be positive, got {getattr(self, name)!r}")
        if self.sigma < 0.0:
            raise ValueError(f"LakeParams.sigma must be >= 0, got {self.sigma!r}")
        if self.sigma**2 >= self.rho + 2.0 * self.b:
            raise ValueError(
                f"noise too strong: sigma^2 = {self.sigma**2:.6g} must stay below "
                f"rho + 2b = {self.rho + 2.0 * self.b:.6g}"
            )


@dataclasses.dataclass(frozen=True)
class RecyclingCurve:
    """A recycling curve ``r`` with its first two derivatives.

    Instances should be built through :func:`make_curve` (or :func:`hill_curve`),
    which audits the callables on a fixed grid before handing them out.

    ``r`` must satisfy ``r(0) = 0``, ``r' >= 0`` and ``r <= a`` with a finite
    horizontal asymptote ``a``.  ``r_second_is_fd`` flags that the second
    derivative was substituted by a centered finite difference of ``r_prime``.
    """

    name: str
    r: Callable[[np.ndarray], np.ndarray]
    r_prime: Callable[[np.ndarray], np.ndarray]
    r_second: Callable[[np.ndarray], np.ndarray]
    a: float
    r_second_is_fd: bool = False


@dataclasses.dataclass(frozen=True)
class PhasePoint:
    """A point (x, u) in the state/control phase plane."""

    x: float
    u: float

    def __post_init__(self) -> None:
        if self.x < 0.0:
            raise DomainError(f"PhasePoint.x must be >= 0, got {self.x!r}")
        if not self.u > 0.0:
            raise DomainError(f"PhasePoint.u must be > 0, got {self.u!r}")


#: Fixed audit grid used when registering a recycling curve: zero plus a
#: log-spaced sweep over [1e-3, 1e3].
AUDIT_GRID = np.concatenate(([0.0], np.logspace(-3.0, 3.0, 121)))


def _centered_fd(f: Callable, x: np.ndarray, scale: float = 6e-6) -> np.ndarray:
    h = scale * np.maximum(1.0, np.abs(x))
    return (np.asarray(f(x + h), dtype=float) - np.asarray(f(x - h), dtype=float)) / (2.0 * h)


@dataclasses.dataclass(frozen=True)
class CurveAudit:
    """Result of auditing a recycling curve on :data:`AUDIT_GRID`."""

    name: str
    max_rel_err_r_prime: float
    max_rel_err_r_second: float
    asymptote_gap_times_x: float  # (a - r(x)) * x at the largest grid point
    near_zero_violations: tuple  # grid x in (0, 0.1] where r(x) > (b+rho)*x
    r_second_is_fd: bool


def audit_curve(curve: RecyclingCurve, params: Optional[LakeParams] = None) -> CurveAudit:
    """Check a curve's shape and derivative consistency on the audit grid.

    Hard violations (``r(0) != 0``, negative slope, ``r > a``, derivative
    mismatch beyond relative 1e-6, unbounded ``(a - r(x))*x`` tail) raise
    :class:`CurveError`.  The near-zero loading condition ``r(x) <= (b+rho)*x``
    is only meaningful close to the origin: it is audited on grid points in
    ``(0, 0.1]`` when ``params`` is given, and violations are *reported* in the
    returned record rather than rejected.
    """
    x = AUDIT_GRID
    r = np.asarray(curve.r(x), dtype=float)
    if abs(r[0]) > 1e-12:
        raise CurveError(f"curve {curve.name!r}: r(0) = {r[0]!r}, expected 0")
    rp = np.asarray(curve.r_prime(x), dtype=float)
    if np.any(rp < -1e-12):
        raise CurveError(f"curve {curve.name!r}: r' < 0 on the audit grid")
    if np.any(r > curve.a * (1.0 + 1e-9) + 1e-12):
        raise CurveError(f"curve {curve.name!r}: r exceeds its asymptote a = {curve.a}")

    pos = x[1:]
    fd1 = _centered_fd(curve.r, pos)
    err1 = np.max(np.abs(fd1 - rp[1:]) / np.maximum(1.0, np.abs(rp[1:])))
    if err1 > 1e-6:
        raise CurveError(
            f"curve {curve.name!r}: r_prime disagrees with a centered difference of r "
            f"(max relative error {err1:.3e} > 1e-6)"
        )
    fd2 = _centered_fd(curve.r_prime, pos)
    rs = np.asarray(curve.r_second(pos), dtype=float)
    err2 = np.max(np.abs(fd2 - rs) / np.maximum(1.0, np.abs(rs)))
    if err2 > 1e-6:
        raise CurveError(
            f"curve {curve.name!r}: r_second disagrees with a centered difference of "
            f"r_prime (max relative error {err2:.3e} > 1e-6)"
        )

    gap = (curve.a - r) * x
    tail = gap[x >= 10.0]
    if tail.size and np.max(tail) > 100.0 * max(1.0, curve.a):
        raise CurveError(f"curve {curve.name!r}: (a - r(x))*x grows without bound on the grid")

    violations: tuple = ()
    if params is not None:
        window = (x > 0.0) & (x <= 0.1)
        bad = window & (r > (params.b + params.rho) * x * (1.0 + 1e-12))
        violations = tuple(x[bad])

    return CurveAudit(
        name=curve.name,
        max_rel_err_r_prime=float(err1),
        max_rel_err_r_second=float(err2),
        asymptote_gap_times_x=float(gap[-1]),
        near_zero_violations=violations,
        r_second_is_fd=curve.r_second_is_fd,
    )


def make_curve(
    name: str,
    r: Callable,
    r_prime: Callable,
    a: float,
    r_second: Optional[Callable] = None,
) -> RecyclingCurve:
    """Register a recycling curve, auditing it on :data:`AUDIT_GRID`.

    When ``r_second`` is omitted a centered finite difference of ``r_prime``
    (step ``1e-5 * max(1, x)``) is substituted and flagged via
    ``r_second_is_fd``.
    """
    if r_second is None:
        def r_second(x, _rp=r_prime):  # noqa: ANN001 - numpy-polymorphic
            return _centered_fd(_rp, np.asarray(x, dtype=float), scale=1e-5)

        flagged = True
    else:
        flagged = False
    curve = RecyclingCurve(name=name, r=r, r_prime=r_prime, r_second=r_second, a=a,
                           r_second_is_fd=flagged)
    audit_curve(curve)
    return curve


def hill_curve() -> RecyclingCurve:
    """The Hill-type sigmoid ``r(x) = x**2 / (1 + x**2)`` with asymptote 1."""

    def r(x):
        x = np.asarray(x, dtype=float)
        return x * x / (1.0 + x * x)

    def r_prime(x):
        x = np.asarray(x, dtype=float)
        return 2.0 * x / (1.0 + x * x) ** 2

    def r_second(x):
        x = np.asarray(x, dtype=float)
        return 2.0 * (1.0 - 3.0 * x * x) / (1.0 + x * x) ** 3

    return RecyclingCurve(name="hill", r=r, r_prime=r_prime, r_second=r_second, a=1.0)


def _check_state(x, u=None) -> None:
    if np.any(np.asarray(x) < 0.0):
        raise DomainError("state x must be >= 0")
    if u is not None and np.any(np.asarray(u) <= 0.0):
        raise DomainError("control u must be > 0")


def drift(params: LakeParams, curve: RecyclingCurve, x, u):
    """Deterministic drift ``u - b*x + r(x)`` of the pollutant stock."""
    _check_state(x, u)
    x = np.asarray(x, dtype=float)
    out = np.asarray(u, dtype=float) - params.b * x + curve.r(x)
    return float(out) if out.ndim == 0 else out


def g1(params: LakeParams, curve: RecyclingCurve, x):
    """Nullcline branch ``g1(x) = (rho + b - r'(x)) / (2*c*x)`` of the costate flow, x > 0."""
    x = np.asarray(x, dtype=float)
    if np.any(x <= 0.0):
        raise DomainError("g1 requires x > 0")
    out = (params.rho + params.b - curve.r_prime(x)) / (2.0 * params.c * x)
    return float(out) if out.ndim == 0 else out


def costate_dynamics(params: LakeParams, curve: RecyclingCurve, x, u):
    """Control velocity ``du/dt`` along an extremal arc.

    Along a Pontryagin extremal the control obeys

        du/dt = 2*c*x*u**2 - (rho + b - r'(x))*u,

    which for ``x > 0`` factors as ``2*c*x*u*(u - g1(x))`` and degenerates
    smoothly to ``-(rho + b - r'(0))*u`` at the boundary ``x = 0``.
    """
    _check_state(x, u)
    x = np.asarray(x, dtype=float)
    u = np.asarray(u, dtype=float)
    out = 2.0 * params.c * x * u * u - (params.rho + params.b - curve.r_prime(x)) * u
    return float(out) if out.ndim == 0 else out


def hamiltonian(params: LakeParams, curve: RecyclingCurve, x, p):
    """Maximised Hamiltonian ``H(x, p) = (r(x) - b*x)*p - ln(-p) - 1 - c*x**2``.

    ``p`` must be strictly negative: the supremum of
    ``(u - b*x + r(x))*p + ln(u) - c*x**2`` over ``u > 0`` is attained at
    ``u = -1/p`` and is infinite for ``p >= 0``.

    Raises
    ------
    DomainError
        If any ``p >= 0`` or any ``x < 0``.
    """
    _check_state(x)
    p = np.asarray(p, dtype=float)
    if np.any(p >= 0.0):
        raise DomainError("hamiltonian requires costate p < 0 (sup over u diverges otherwise)")
    x = np.asarray(x, dtype=float)
    out = (curve.r(x) - params.b * x) * p - np.log(-p) - 1.0 - params.c * x * x
    return float(out) if out.ndim == 0 else out


def log_hamiltonian(params: LakeParams, curve: RecyclingCurve, y, p):
    """Hamiltonian in the log coordinate ``y = ln x``.

    With ``Vtilde(y) = V(e**y)`` the stationary equation turns into
    ``rho*Vtilde = Htilde(y, Vtilde') + (sigma**2/2) * Vtilde''`` where

        Htilde(y, p) = (r(e**y)*e**-y - b - sigma**2/2)*p - ln(-p) + y - 1
                       - c*e**(2*y).

    Satisfies ``Htilde(y, p) = H(e**y, p*e**-y) - (sigma**2/2)*p`` exactly.
    """
    p = np.asarray(p, dtype=float)
    if np.any(p >= 0.0):
        raise DomainError("log_hamiltonian requires p < 0")
    y = np.asarray(y, dtype=float)
    ey = np.exp(y)
    out = (
        (curve.r(ey) / ey - params.b - 0.5 * params.sigma**2) * p
        - np.log(-p)
        + y
        - 1.0
        - params.c * ey * ey
    )
    return float(out) if out.ndim == 0 else out


def far_field_coefficient(params: LakeParams) -> float:
    """Coefficient ``A = c / (rho + 2*b - sigma**2)`` of the quadratic far-field bound.

    For large ``x`` the value function behaves like ``-A*x**2``: substituting
    ``V = -A*x**2`` into ``rho*V - (r - b*x)*V' + ln(-V') + c*x**2 + 1
    - (sigma**2/2)*x**2*V''`` and matching the ``x**2`` coefficients gives
    ``A*(rho + 2*b - sigma**2) = c``.
    """
    return params.c / (params.rho + 2.0 * params.b - params.sigma**2)
