"""Model primitives: parameter validation, curve audits, Hamiltonian identities."""

import math

import numpy as np
import pytest

from lakelab.model import (
    AUDIT_GRID,
    CurveError,
    DomainError,
    LakeParams,
    PhasePoint,
    audit_curve,
    costate_dynamics,
    drift,
    far_field_coefficient,
    g1,
    hamiltonian,
    hill_curve,
    log_hamiltonian,
    make_curve,
)


def test_params_validation():
    LakeParams(b=0.65, c=0.512, rho=0.03)
    with pytest.raises(ValueError):
        LakeParams(b=-0.65, c=0.512, rho=0.03)
    with pytest.raises(ValueError):
        LakeParams(b=0.65, c=0.0, rho=0.03)
    with pytest.raises(ValueError):
        LakeParams(b=0.65, c=0.512, rho=0.03, sigma=-0.1)
    # sigma^2 must stay below rho + 2b = 1.33
    with pytest.raises(ValueError):
        LakeParams(b=0.65, c=0.512, rho=0.03, sigma=1.2)
    LakeParams(b=0.65, c=0.512, rho=0.03, sigma=1.1)


def test_phase_point_domain():
    PhasePoint(0.0, 1.0)
    with pytest.raises(DomainError):
        PhasePoint(-1e-9, 1.0)
    with pytest.raises(DomainError):
        PhasePoint(1.0, 0.0)


def test_hill_curve_shape(curve):
    x = np.linspace(0.0, 50.0, 2001)
    r = curve.r(x)
    assert r[0] == 0.0
    assert np.all(np.diff(r) > 0.0)
    assert np.all(r < curve.a)
    assert curve.a == 1.0
    np.testing.assert_allclose(curve.r(1.0), 0.5)
    np.testing.assert_allclose(curve.r_prime(1.0), 0.5)
    np.testing.assert_allclose(curve.r_second(0.0), 2.0)


def test_hill_audit(curve, params):
    audit = audit_curve(curve, params)
    assert audit.max_rel_err_r_prime <= 1e-6
    assert audit.max_rel_err_r_second <= 1e-6
    # r(x) <= (b + rho) x close to the origin: no near-zero violations
    assert audit.near_zero_violations == ()
    # (a - r(x)) * x = x/(1+x^2) -> 0: bounded asymptote gap
    assert audit.asymptote_gap_times_x < 1e-2


def test_make_curve_fd_fallback():
    curve = make_curve(
        "hill-nofd",
        lambda x: np.asarray(x, float) ** 2 / (1.0 + np.asarray(x, float) ** 2),
        lambda x: 2.0 * np.asarray(x, float) / (1.0 + np.asarray(x, float) ** 2) ** 2,
        a=1.0,
    )
    assert curve.r_second_is_fd
    ref = hill_curve()
    x = AUDIT_GRID[1:]
    np.testing.assert_allclose(curve.r_second(x), ref.r_second(x), atol=1e-5, rtol=1e-4)


def test_audit_rejects_broken_curves():
    with pytest.raises(CurveError):
        make_curve("offset", lambda x: np.asarray(x, float) + 1.0,
                   lambda x: np.ones_like(np.asarray(x, float)), a=2e3)
    with pytest.raises(CurveError):
        # r_prime inconsistent with r
        make_curve(
            "wrong-slope",
            lambda x: np.asarray(x, float) ** 2 / (1.0 + np.asarray(x, float) ** 2),
            lambda x: np.asarray(x, float) / (1.0 + np.asarray(x, float) ** 2) ** 2,
            a=1.0,
        )


def test_drift_and_domain(params, curve):
    # at the balance control u = b*x - r(x) the stock is stationary
    x = 1.3
    u = params.b * x - float(curve.r(x))
    assert abs(drift(params, curve, x, u)) < 1e-15
    assert drift(params, curve, 0.0, 2.0) == 2.0
    with pytest.raises(DomainError):
        drift(params, curve, -0.1, 1.0)
    with pytest.raises(DomainError):
        drift(params, curve, 1.0, 0.0)


def test_costate_dynamics_factors_through_g1(params, curve):
    x = np.array([0.2, 0.7, 1.4, 3.0])
    u = np.array([0.05, 0.2, 0.6, 1.1])
    lhs = costate_dynamics(params, curve, x, u)
    rhs = 2.0 * params.c * x * u * (u - g1(params, curve, x))
    np.testing.assert_allclose(lhs, rhs, rtol=1e-13)
    # degenerate boundary value
    val = costate_dynamics(params, curve, 0.0, 0.5)
    expected = -(params.rho + params.b - float(curve.r_prime(0.0))) * 0.5
    np.testing.assert_allclose(val, expected)


def test_hamiltonian_is_the_control_envelope(params, curve):
    """H(x, p) must dominate the pre-maximised integrand, with equality at u = -1/p."""
    rng = np.random.default_rng(5)
    for _ in range(50):
        x = float(rng.uniform(0.0, 5.0))
        p = -float(rng.uniform(0.05, 20.0))
        H = hamiltonian(params, curve, x, p)
        u_star = -1.0 / p
        inner = lambda u: drift(params, curve, x, u) * p + math.log(u) - params.c * x * x
        np.testing.assert_allclose(H, inner(u_star), rtol=1e-12)
        for u in (0.3 * u_star, 3.0 * u_star):
            assert inner(u) < H + 1e-12


def test_hamiltonian_domain(params, curve):
    with pytest.raises(DomainError):
        hamiltonian(params, curve, 1.0, 0.0)
    with pytest.raises(DomainError):
        hamiltonian(params, curve, 1.0, np.array([-1.0, 0.5]))


def test_log_hamiltonian_identity(curve):
    """Htilde(y, p) = H(e^y, p e^{-y}) - (sigma^2/2) p, exactly."""
    params = LakeParams(b=0.65, c=0.512, rho=0.03, sigma=0.2)
    y = np.linspace(-2.0, 2.5, 31)
    p = -1.7
    lhs = log_hamiltonian(params, curve, y, p)
    x = np.exp(y)
    rhs = hamiltonian(params, curve, x, p / x) - 0.5 * params.sigma**2 * p
    np.testing.assert_allclose(lhs, rhs, rtol=5e-13)


def test_far_field_coefficient():
    params = LakeParams(b=0.65, c=0.512, rho=0.03, sigma=0.1)
    np.testing.assert_allclose(
        far_field_coefficient(params), 0.512 / (0.03 + 1.3 - 0.01)
    )
    # the quadratic coefficient satisfies A (rho + 2b - sigma^2) = c by design
    A = far_field_coefficient(params)
    np.testing.assert_allclose(A * (params.rho + 2 * params.b - params.sigma**2), params.c)
