"""Numerical laboratory for the stochastic shallow lake control problem.

The package splits the pipeline into four layers: the model primitives
(:mod:`lakelab.model`), the deterministic phase-plane construction of the
candidate value function (:mod:`lakelab.pontryagin`), the degenerate-elliptic
HJB solver (:mod:`lakelab.hjb`), and the exit-time machinery built on the
log-coordinate potential (:mod:`lakelab.metastability`).  A thin command-line
front end (:mod:`lakelab.cli`) wires configuration, caching and CSV emission.
"""

__version__ = "0.1.0"

from .model import LakeParams, RecyclingCurve, hill_curve, make_curve
from .pontryagin import build_candidate, find_equilibria, stable_manifold
from .hjb import GridSpec, default_grid, from_candidate, solve_hjb
from .metastability import (
    arrhenius_estimate,
    build_potential,
    mean_exit_time_quadrature,
    simulate_exit,
    simulate_paths,
)

__all__ = [
    "__version__",
    "LakeParams",
    "RecyclingCurve",
    "hill_curve",
    "make_curve",
    "build_candidate",
    "find_equilibria",
    "stable_manifold",
    "GridSpec",
    "default_grid",
    "from_candidate",
    "solve_hjb",
    "arrhenius_estimate",
    "build_potential",
    "mean_exit_time_quadrature",
    "simulate_exit",
    "simulate_paths",
]
