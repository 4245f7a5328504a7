"""Phase-plane analysis: equilibria, stable manifolds, candidate value envelope."""

import math

import numpy as np
import pytest
from scipy.optimize import brentq

from lakelab.model import LakeParams, PhasePoint, drift, hamiltonian, hill_curve
from lakelab import pontryagin
from lakelab.pontryagin import (
    TOWARD_LARGER_X,
    TOWARD_SMALLER_X,
    build_candidate,
    candidate_value,
    classify,
    find_equilibria,
    quadratic_lower_bound_check,
    stable_manifold,
)

# Frozen reference values for the canonical parameter set (b, c, rho) =
# (0.65, 0.512, 0.03) with the Hill curve.  Regenerate by rerunning
# find_equilibria / build_candidate if the root-finding tolerances change.
X_SADDLE_LO = 0.4506958497605772
X_VORTEX = 0.8846041163975994
X_SADDLE_HI = 1.414124823810955
U_SADDLE_LO = 0.12411992523889431
U_VORTEX = 0.13599480052052743
U_SADDLE_HI = 0.2525423581083238
SLOPE_LO = -0.22835034357443884
SLOPE_HI = 0.042877030993051624
X_SKIBA = 0.931145955351326


@pytest.fixture(scope="module")
def equilibria(params, curve):
    return find_equilibria(params, curve, 20.0)


def test_equilibria_frozen(equilibria):
    assert [e.kind for e in equilibria] == ["saddle", "vortex", "saddle"]
    np.testing.assert_allclose(
        [e.x for e in equilibria], [X_SADDLE_LO, X_VORTEX, X_SADDLE_HI], rtol=1e-12
    )
    np.testing.assert_allclose(
        [e.u for e in equilibria], [U_SADDLE_LO, U_VORTEX, U_SADDLE_HI], rtol=1e-12
    )
    lo, vx, hi = equilibria
    np.testing.assert_allclose(lo.stable_slope, SLOPE_LO, rtol=1e-10)
    np.testing.assert_allclose(hi.stable_slope, SLOPE_HI, rtol=1e-10)
    assert vx.stable_slope is None
    # the vortex eigenvalues are a complex pair with real part rho/2
    lam = vx.eigenvalues
    assert lam[0].conjugate() == lam[1]
    np.testing.assert_allclose(lam[1].real, 0.015, atol=1e-12)
    np.testing.assert_allclose(lam[1].imag, 0.18458257047839352, rtol=1e-10)


def test_equilibria_against_direct_root_scan(params, curve, equilibria):
    """Independent oracle: equilibria solve u = b*x - r(x) = g1(x) directly."""

    def phi(x):
        return (params.b * x - x * x / (1 + x * x)) - (
            params.rho + params.b - 2 * x / (1 + x * x) ** 2
        ) / (2 * params.c * x)

    xs = np.linspace(1e-4, 5.0, 20001)
    vals = phi(xs)
    roots = [
        brentq(phi, xs[i], xs[i + 1])
        for i in range(len(xs) - 1)
        if vals[i] * vals[i + 1] < 0
    ]
    assert len(roots) == len(equilibria)
    np.testing.assert_allclose(roots, [e.x for e in equilibria], atol=1e-9)
    for e in equilibria:
        # both rest-point conditions hold at the reported (x, u)
        assert abs(e.u - (params.b * e.x - float(curve.r(e.x)))) < 1e-12
        assert abs(phi(e.x)) < 1e-9


def test_jacobian_matches_finite_differences(params, curve, equilibria):
    b, c, rho = params.b, params.c, params.rho

    def field(x, u):
        f = u - b * x + float(curve.r(x))
        g = 2 * c * x * u * u - (rho + b - float(curve.r_prime(x))) * u
        return np.array([f, g])

    h = 1e-6
    for eq in equilibria:
        x0, u0 = eq.x, eq.u
        fd = np.column_stack(
            [
                (field(x0 + h, u0) - field(x0 - h, u0)) / (2 * h),
                (field(x0, u0 + h) - field(x0, u0 - h)) / (2 * h),
            ]
        )
        np.testing.assert_allclose(eq.jacobian, fd, atol=1e-7)
        # the flow expands phase-space volume at rate rho everywhere
        np.testing.assert_allclose(np.trace(eq.jacobian), rho, atol=1e-12)
        lam = eq.eigenvalues
        np.testing.assert_allclose(complex(lam[0] + lam[1]), rho, atol=1e-10)


def test_classify_rejects_non_equilibrium(params, curve):
    with pytest.raises(ValueError, match="not an equilibrium"):
        classify(params, curve, PhasePoint(1.0, 0.5))


def test_manifold_tangent_to_stable_eigenvector(params, curve, equilibria):
    lo, _, hi = equilibria
    cases = [
        (lo, TOWARD_LARGER_X, (lo.x, 30.0)),
        (lo, TOWARD_SMALLER_X, (0.0, lo.x)),
        (hi, TOWARD_LARGER_X, (hi.x, 30.0)),
    ]
    for eq, direction, bounds in cases:
        br = stable_manifold(params, curve, eq, direction, bounds)
        dx = br.x - eq.x
        m = (np.abs(dx) > 1e-7) & (np.abs(dx) <= 0.02)
        assert m.any()
        resid = np.abs(br.u[m] - (eq.u + eq.stable_slope * dx[m]))
        # departure from the linearisation is quadratic in the offset
        assert np.all(resid <= 1.0 * dx[m] ** 2)


def test_manifold_input_validation(params, curve, equilibria):
    lo, vx, _ = equilibria
    with pytest.raises(ValueError, match="requires a saddle"):
        stable_manifold(params, curve, vx, TOWARD_LARGER_X, (vx.x, 3.0))
    with pytest.raises(ValueError, match="unknown direction"):
        stable_manifold(params, curve, lo, "sideways", (lo.x, 3.0))
    with pytest.raises(ValueError, match="must contain the saddle"):
        stable_manifold(params, curve, lo, TOWARD_LARGER_X, (2.0, 3.0))


def test_manifold_halfstep_consistency(params, curve, equilibria):
    """Halving max_step must not move the traced arm (integration is converged)."""
    lo = equilibria[0]
    br1 = stable_manifold(params, curve, lo, TOWARD_LARGER_X, (lo.x, 30.0))
    br2 = stable_manifold(
        params, curve, lo, TOWARD_LARGER_X, (lo.x, 30.0), max_step=0.015
    )
    pts = br1.x[(br1.x > br2.x[0]) & (br1.x < br2.x[-1])]
    f = drift(params, curve, pts, br1.interp_u(pts))
    sel = np.abs(f) > 0.02  # fast-moving stretch, away from the slow saddle exit
    assert sel.sum() > 100
    diff = np.abs(br2.interp_u(pts[sel]) - br1.interp_u(pts[sel]))
    assert np.max(diff) < 1e-8


def test_manifold_value_anchors_and_quadrature_gap(params, curve, equilibria):
    """J at each saddle equals the stationary payoff (ln u0 - c x0^2) / rho."""
    lo, _, hi = equilibria
    for eq, anchor in ((lo, -73.01693124049946), (hi, -80.00159287728505)):
        br = stable_manifold(params, curve, eq, TOWARD_LARGER_X, (eq.x, 21.0))
        assert br.x[0] == eq.x
        np.testing.assert_allclose(br.J[0], anchor, rtol=1e-12)
        np.testing.assert_allclose(
            br.J[0], (math.log(eq.u) - params.c * eq.x**2) / params.rho, rtol=1e-12
        )
        assert br.quad_gap < 1e-3


def test_candidate_skiba_frozen(candidate):
    s = candidate.skiba
    assert s is not None and candidate.threshold_x is None
    assert s.gap <= 1e-8
    np.testing.assert_allclose(s.x, X_SKIBA, rtol=1e-9)
    np.testing.assert_allclose(s.J, -77.93656214217378, rtol=1e-10)
    np.testing.assert_allclose(s.u_left, 0.10003233789442953, rtol=1e-8)
    np.testing.assert_allclose(s.u_right, 0.20726268967375397, rtol=1e-8)
    np.testing.assert_allclose(s.vp_left, -9.996767255958403, rtol=1e-8)
    np.testing.assert_allclose(s.vp_right, -4.824795053919595, rtol=1e-8)
    np.testing.assert_allclose(s.vpp_left, 12.33517307735913, rtol=1e-7)
    np.testing.assert_allclose(s.vpp_right, 3.7687240152509562, rtol=1e-7)
    # left/right consistency: V' = -1/u on both sides, kink has vp_left < vp_right
    np.testing.assert_allclose(s.vp_left, -1.0 / s.u_left, rtol=1e-14)
    np.testing.assert_allclose(s.vp_right, -1.0 / s.u_right, rtol=1e-14)
    assert s.vp_left < s.vp_right


def test_candidate_envelope_shape(candidate):
    assert len(candidate.branches) == 4
    assert len(candidate.sides) == 2
    assert candidate.x[0] <= 1e-6 and candidate.x[-1] >= 20.0 - 1e-9
    # the Skiba node appears exactly twice, with the two one-sided controls
    hits = np.nonzero(candidate.x == candidate.skiba.x)[0]
    assert len(hits) == 2 and hits[1] == hits[0] + 1
    u_pair = candidate.u[hits]
    np.testing.assert_allclose(
        u_pair, [candidate.skiba.u_left, candidate.skiba.u_right]
    )
    # J strictly decreasing except at the doubled node
    dJ = np.diff(candidate.J)
    assert np.all(dJ <= 0.0)
    assert np.sum(dJ == 0.0) <= 1


def test_candidate_evaluation(candidate):
    xs = np.linspace(0.0, 20.0, 2001)
    V = candidate.value(xs)
    u = candidate.policy(xs)
    assert np.all(np.diff(V) < 0.0)
    assert np.all(u > 0.0)
    assert np.all(candidate.derivative(xs) < 0.0)
    np.testing.assert_allclose(candidate.derivative(xs), -1.0 / u, rtol=1e-14)
    # continuous across the Skiba point, kinked in the derivative
    s = candidate.skiba
    np.testing.assert_allclose(candidate.value(s.x), s.J, atol=1e-9)
    eps = 1e-9
    assert abs(candidate.value(s.x + eps) - candidate.value(s.x - eps)) < 1e-6
    jump = candidate.derivative(s.x + eps) - candidate.derivative(s.x - eps)
    np.testing.assert_allclose(jump, s.vp_right - s.vp_left, atol=1e-4)


def test_candidate_solves_stationary_equation(params, curve, candidate):
    """rho*J = H(x, J') along the envelope, to interpolation accuracy."""
    xs = np.linspace(1e-3, 20.0, 4001)
    xs = xs[np.abs(xs - candidate.skiba.x) > 0.02]
    p = candidate.derivative(xs)
    H = np.array(
        [hamiltonian(params, curve, float(x), float(pi)) for x, pi in zip(xs, p)]
    )
    resid = params.rho * candidate.value(xs) - H
    assert np.max(np.abs(resid)) < 2e-6


def test_quadratic_lower_bound(candidate, params):
    rep = quadratic_lower_bound_check(candidate, params)
    assert rep.ok
    np.testing.assert_allclose(rep.A, 0.38496240601503756, rtol=1e-14)
    assert rep.max_increase <= 1e-9
    np.testing.assert_allclose(rep.tail_ratio, 1.0862489295931497, rtol=1e-6)
    assert rep.x_end >= 20.0 - 1e-9


def test_candidate_value_requires_domain_coverage(params, curve, equilibria):
    lo = equilibria[0]
    inner = [
        stable_manifold(params, curve, lo, TOWARD_SMALLER_X, (0.0, lo.x)),
        stable_manifold(params, curve, lo, TOWARD_LARGER_X, (lo.x, 2.0)),
    ]
    with pytest.raises(ValueError, match="misses the requested domain"):
        candidate_value(params, curve, inner, x_max=20.0)


def test_single_saddle_regime(curve):
    """Stronger self-cleaning (b = 0.8) leaves one saddle and no Skiba point."""
    params = LakeParams(b=0.8, c=0.512, rho=0.03)
    eqs = find_equilibria(params, curve, 20.0)
    assert [e.kind for e in eqs] == ["saddle"]
    np.testing.assert_allclose(eqs[0].x, 1.1192858195438675, rtol=1e-10)
    cv = build_candidate(params, curve, x_max=6.0)
    assert cv.skiba is None and cv.threshold_x is None
    assert len(cv.sides) == 1
    xs = np.linspace(0.0, 6.0, 500)
    assert np.all(np.diff(cv.value(xs)) < 0.0)
    assert np.all(cv.policy(xs) > 0.0)
