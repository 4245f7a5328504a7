"""Shared fixtures: the canonical bistable lake and its solved artifacts.

Session scope keeps the expensive pieces (manifold integration, the
sigma = 0.1 policy-iteration solve) to one evaluation for the whole suite.
"""

import dataclasses

import pytest

from lakelab import hjb, metastability, pontryagin
from lakelab.model import LakeParams, hill_curve


@pytest.fixture(scope="session")
def params():
    return LakeParams(b=0.65, c=0.512, rho=0.03)


@pytest.fixture(scope="session")
def curve():
    return hill_curve()


@pytest.fixture(scope="session")
def candidate(params, curve):
    return pontryagin.build_candidate(params, curve, x_max=20.0)


@pytest.fixture(scope="session")
def grid4096():
    return hjb.GridSpec(x_max=20.0, n=4096)


@pytest.fixture(scope="session")
def vf_det(candidate, grid4096):
    return hjb.from_candidate(candidate, grid4096)


@pytest.fixture(scope="session")
def potential_det(vf_det, params, curve):
    return metastability.build_potential(vf_det, params, curve)


@pytest.fixture(scope="session")
def solve_sigma01(params, curve, grid4096):
    """(ValueFunction, SolveReport) at sigma = 0.1 on the 4096-node grid."""
    ps = dataclasses.replace(params, sigma=0.1)
    return hjb.solve_hjb(ps, curve, grid4096)
