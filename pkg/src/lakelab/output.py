"""Deterministic CSV emission with '#'-prefixed metadata headers.

Every tabular product of the pipeline is a flat comma-separated file headed
by a commented block: library versions, the configuration hash and echo, and
product-specific metadata (Skiba block, solver statistics, anchors, seeds).
Floats are written with ``repr`` -- the shortest round-trip form -- so a file
regenerated from the same configuration is byte-identical, and no timestamps
or machine identifiers ever enter the header.
"""

from __future__ import annotations

import sys
from typing import Iterable, List, Sequence, Tuple

import numpy as np
import scipy

from . import __version__

Columns = Sequence[Tuple[str, Sequence]]


def fmt(value) -> str:
    """Render a cell: strings as-is, ints plain, floats via repr, None as nan."""
    if value is None:
        return "nan"
    if isinstance(value, str):
        return value
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return repr(float(value))


def version_lines() -> List[str]:
    py = ".".join(str(p) for p in sys.version_info[:3])
    return [
        f"lakelab {__version__} (numpy {np.__version__}, scipy {scipy.__version__}, "
        f"python {py})"
    ]


def write_csv(path, columns: Columns, header_lines: Iterable[str] = ()) -> None:
    """Write ``columns`` (name, values pairs) to ``path`` with a '#' header."""
    names = [name for name, _ in columns]
    cols = [list(vals) for _, vals in columns]
    n_rows = len(cols[0]) if cols else 0
    for name, col in zip(names, cols):
        if len(col) != n_rows:
            raise ValueError(f"column {name!r} has {len(col)} rows, expected {n_rows}")
    lines = [f"# {line}" if line else "#" for line in header_lines]
    lines.append(",".join(names))
    for i in range(n_rows):
        lines.append(",".join(fmt(col[i]) for col in cols))
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


def equilibria_table(eqs) -> Tuple[Columns, List[str]]:
    """Rows (x0, u0, lambda_minus, lambda_plus, kind, stable_slope).

    Eigenvalue columns carry real parts; a vortex has a complex-conjugate
    pair, noted (with the imaginary part) in the returned header lines.
    """
    notes = []
    lam_minus, lam_plus, slopes = [], [], []
    for eq in eqs:
        lo, hi = eq.eigenvalues
        lam_minus.append(float(np.real(lo)))
        lam_plus.append(float(np.real(hi)))
        slopes.append(float("nan") if eq.stable_slope is None else eq.stable_slope)
        if abs(np.imag(lo)) > 0.0:
            notes.append(
                f"{eq.kind} at x0 = {fmt(eq.x)}: complex eigenvalue pair "
                f"{fmt(np.real(lo))} +- {fmt(abs(np.imag(lo)))}i; "
                "lambda columns carry the real part"
            )
    columns = [
        ("x0", [eq.x for eq in eqs]),
        ("u0", [eq.u for eq in eqs]),
        ("lambda_minus", lam_minus),
        ("lambda_plus", lam_plus),
        ("kind", [eq.kind for eq in eqs]),
        ("stable_slope", slopes),
    ]
    return columns, notes


def branch_table(branches) -> Tuple[Columns, List[str]]:
    """Concatenated manifold arms with a branch_id column and per-arm notes."""
    notes = []
    xs, us, js, ids = [], [], [], []
    for k, br in enumerate(branches):
        xs.append(br.x)
        us.append(br.u)
        js.append(br.J)
        ids.append(np.full(br.x.size, k, dtype=int))
        fold = "none" if br.fold_x is None else fmt(br.fold_x)
        notes.append(
            f"branch {k}: saddle x0 = {fmt(br.equilibrium.x)}, {br.direction}, "
            f"{br.x.size} samples, terminated by {br.terminated_by}, fold_x = {fold}, "
            f"quad_gap = {fmt(br.quad_gap)}"
        )
    columns = [
        ("x", np.concatenate(xs)),
        ("u", np.concatenate(us)),
        ("J_P", np.concatenate(js)),
        ("branch_id", np.concatenate(ids)),
    ]
    return columns, notes


def candidate_table(cv) -> Tuple[Columns, List[str]]:
    """Envelope samples (x, u, J_P, branch_id) plus the Skiba metadata block.

    ``branch_id`` labels the envelope side (0 = lower saddle's branch, 1 =
    upper saddle's); at a Skiba point the abscissa appears once per side
    because the optimal control is set-valued there.
    """
    ids = np.zeros(cv.x.size, dtype=int)
    if len(cv.sides) == 2:
        split = cv.sides[0].x.size if cv.skiba is None else None
        if cv.skiba is not None:
            hits = np.flatnonzero(cv.x == cv.skiba.x)
            split = int(hits[0]) + 1 if hits.size else int(np.searchsorted(cv.x, cv.skiba.x))
        ids[split:] = 1
    notes = []
    if cv.skiba is not None:
        s = cv.skiba
        notes += [
            "indifference point (policy is set-valued; the row appears once per side):",
            f"  x_star = {fmt(s.x)}",
            f"  J = {fmt(s.J)}, branch gap after bisection = {fmt(s.gap)}",
            f"  u_left = {fmt(s.u_left)}, u_right = {fmt(s.u_right)}",
            f"  Vp_left = {fmt(s.vp_left)}, Vp_right = {fmt(s.vp_right)}",
            f"  Vpp_left = {fmt(s.vpp_left)}, Vpp_right = {fmt(s.vpp_right)}",
        ]
    elif cv.threshold_x is not None:
        notes.append(f"branches abut at threshold x = {fmt(cv.threshold_x)} (no value crossing)")
    columns = [("x", cv.x), ("u", cv.u), ("J_P", cv.J), ("branch_id", ids)]
    return columns, notes


def hjb_table(valuefn, v2, res) -> Columns:
    return [
        ("x", valuefn.grid.x),
        ("V", valuefn.V),
        ("Vp", valuefn.Vp),
        ("V2", v2),
        ("residual", res),
    ]


def potential_table(potential) -> Columns:
    return [("y", potential.y), ("F", potential.F), ("Fp", potential.Fp)]


def ladder_table(rows) -> Columns:
    """Exit-time ladder rows (one per noise level)."""
    return [
        ("sigma", [r.sigma for r in rows]),
        ("epsilon", [r.epsilon for r in rows]),
        ("tau_quad", [r.tau_quadrature for r in rows]),
        ("tau_mc", [r.tau_mc for r in rows]),
        ("stderr", [r.tau_mc_stderr for r in rows]),
        ("eps_log_tau", [r.eps_log_tau for r in rows]),
        ("barrier", [r.barrier_height for r in rows]),
    ]


def paths_table(record, path_id: int) -> Columns:
    n = record.t.size
    return [
        ("path_id", np.full(n, path_id, dtype=int)),
        ("t", record.t),
        ("x", record.x),
    ]
