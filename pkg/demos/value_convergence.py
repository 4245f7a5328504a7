"""Stochastic value functions collapsing onto the deterministic envelope.

Solves the stationary HJB equation along a decreasing noise ladder and
overlays each solution on the Pontryagin candidate, reporting the sup
distance on the compact window [0, 3] where the vanishing-viscosity limit
is locally uniform.  Writes a two-panel figure (values, policies) and the
distance table into demos/output/.
"""

import dataclasses
import pathlib

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from lakelab import hjb, pontryagin
from lakelab.model import LakeParams, hill_curve

OUT = pathlib.Path(__file__).with_name("output")
SIGMAS = (0.2, 0.1, 0.05)


def main():
    OUT.mkdir(exist_ok=True)
    params = LakeParams(b=0.65, c=0.512, rho=0.03)
    curve = hill_curve()
    spec = hjb.GridSpec(20.0, 4096)

    cand = pontryagin.build_candidate(params, curve, x_max=20.0)
    xs = np.linspace(0.0, 3.0, 601)
    ref_v = cand.value(xs)
    ref_u = cand.policy(xs)

    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(11, 4.5))
    rows = []
    print("sigma   sup|V_sigma - J_P| on [0,3]   solver iters")
    for s in SIGMAS:
        ps = dataclasses.replace(params, sigma=s)
        vf, rep = hjb.solve_hjb(ps, curve, spec)
        d = float(np.max(np.abs(vf.value(xs) - ref_v)))
        rows.append((s, d))
        print(f"{s:5.2f}   {d:12.6f}                 {rep.iterations}")
        ax1.plot(xs, vf.value(xs), lw=1.1, label=f"$\\sigma = {s}$")
        ax2.plot(xs, -1.0 / vf.derivative(xs), lw=1.1)
    ax1.plot(xs, ref_v, "k--", lw=1.4, label="$J_P$ (deterministic)")
    ax2.plot(xs, ref_u, "k--", lw=1.4)

    sk = cand.skiba
    for ax in (ax1, ax2):
        ax.axvline(sk.x, color="0.6", ls=":", lw=1)
        ax.set_xlabel("phosphorus stock x")
    ax1.set_ylabel("value")
    ax1.set_title("value functions along the noise ladder")
    ax1.legend(fontsize=8)
    ax2.set_ylabel("optimal loading $u = -1/V'$")
    ax2.set_title("policies steepen into the Skiba jump")
    fig.tight_layout()
    fig.savefig(OUT / "value_convergence.png", dpi=150)

    np.savetxt(
        OUT / "viscosity_distances.csv",
        np.array(rows),
        delimiter=",",
        header="sigma,sup_distance",
        comments="",
    )
    print(f"\nwrote {OUT / 'value_convergence.png'}")
    print(f"wrote {OUT / 'viscosity_distances.csv'}")


if __name__ == "__main__":
    main()
