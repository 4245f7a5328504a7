"""Phase-plane tour of the deterministic control problem.

Finds the interior equilibria of the state/costate flow, traces the stable
manifolds of the two saddles, and assembles the candidate value envelope,
marking the Skiba point where the two branches exchange optimality.  Writes
a phase-plane figure and the envelope samples as CSV into demos/output/.
"""

import pathlib

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from lakelab import pontryagin
from lakelab.model import LakeParams, hill_curve

OUT = pathlib.Path(__file__).with_name("output")


def main():
    OUT.mkdir(exist_ok=True)
    params = LakeParams(b=0.65, c=0.512, rho=0.03)
    curve = hill_curve()

    eqs = pontryagin.find_equilibria(params, curve, 20.0)
    print("interior equilibria (x, u, kind, eigenvalues):")
    for e in eqs:
        lam = ", ".join(f"{v:.4f}" for v in e.eigenvalues)
        print(f"  x = {e.x:.6f}  u = {e.u:.6f}  {e.kind:6s}  [{lam}]")

    cand = pontryagin.build_candidate(params, curve, x_max=20.0)
    sk = cand.skiba
    print(f"\nSkiba point: x* = {sk.x:.9f}, J(x*) = {sk.J:.6f}")
    print(f"  branch gap after bisection: {sk.gap:.2e}")
    print(f"  policy jump: u_left = {sk.u_left:.6f} -> u_right = {sk.u_right:.6f}")

    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(11, 4.5))
    for br in cand.branches:
        lab = f"{br.equilibrium.x:.2f} saddle, {br.direction}"
        ax1.plot(br.x, br.u, lw=1.2, label=lab)
    for e in eqs:
        ax1.plot(e.x, e.u, "ko" if e.kind == "saddle" else "kx", ms=6)
    ax1.axvline(sk.x, color="0.6", ls=":", lw=1)
    ax1.plot([sk.x, sk.x], [sk.u_left, sk.u_right], "rs-", ms=4, lw=1)
    ax1.set_xlim(0, 3)
    ax1.set_ylim(0, 0.5)
    ax1.set_xlabel("phosphorus stock x")
    ax1.set_ylabel("loading u")
    ax1.set_title("stable manifolds of the saddles")
    ax1.legend(fontsize=7, loc="upper left")

    xs = np.linspace(0.0, 3.0, 601)
    ax2.plot(xs, cand.value(xs), "k-", lw=1.4, label="candidate envelope $J_P$")
    for side, style in zip(cand.sides, ("C0--", "C1--")):
        m = side.x <= 3.0
        ax2.plot(side.x[m], side.J[m], style, lw=0.9, alpha=0.7)
    ax2.axvline(sk.x, color="0.6", ls=":", lw=1)
    ax2.annotate(
        "$x_\\star$", (sk.x, sk.J), textcoords="offset points", xytext=(6, 8)
    )
    ax2.set_xlabel("phosphorus stock x")
    ax2.set_ylabel("value")
    ax2.set_title("value branches and their upper envelope")
    ax2.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(OUT / "phase_plane.png", dpi=150)

    np.savetxt(
        OUT / "candidate_envelope.csv",
        np.column_stack([cand.x, cand.u, cand.J]),
        delimiter=",",
        header="x,u,J",
        comments="",
    )
    print(f"\nwrote {OUT / 'phase_plane.png'}")
    print(f"wrote {OUT / 'candidate_envelope.csv'} ({cand.x.size} rows)")


if __name__ == "__main__":
    main()
