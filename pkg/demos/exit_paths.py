"""Controlled trajectories: deterministic basins and noisy switching.

Integrates the optimally controlled lake from starts bracketing the Skiba
point — deterministically the two neighbours part ways forever, while a
moderate noise level lets paths launched exactly at the indifference point
fall to either side and occasionally hop between basins.  Writes a figure
and the noisy path endpoints into demos/output/.
"""

import dataclasses
import pathlib

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from lakelab import hjb, metastability, pontryagin
from lakelab.model import LakeParams, hill_curve

OUT = pathlib.Path(__file__).with_name("output")
SIGMA = 0.3
N_PATHS = 12
HORIZON = 40.0


def main():
    OUT.mkdir(exist_ok=True)
    params = LakeParams(b=0.65, c=0.512, rho=0.03)
    curve = hill_curve()
    spec = hjb.GridSpec(20.0, 4096)

    cand = pontryagin.build_candidate(params, curve, x_max=20.0)
    sk = cand.skiba.x
    eqs = pontryagin.find_equilibria(params, curve, 20.0)
    x_lo, x_hi = eqs[0].x, eqs[2].x

    vf0 = hjb.from_candidate(cand, spec)
    det = metastability.simulate_paths(
        vf0, params, curve, [sk - 1e-3, sk + 1e-3], horizon=60.0
    )
    print("deterministic flow from x_star -/+ 0.001:")
    for rec in det:
        print(f"  start {rec.x_start:.6f} -> x(60) = {rec.x[-1]:.6f}")
    print(f"  (saddles sit at {x_lo:.6f} and {x_hi:.6f})")

    ps = dataclasses.replace(params, sigma=SIGMA)
    vf, _ = hjb.solve_hjb(ps, curve, spec)
    recs = metastability.simulate_paths(
        vf, ps, curve, [sk] * N_PATHS, horizon=HORIZON, seed=0
    )
    finals = np.array([rec.x[-1] for rec in recs])
    left = int(np.sum(finals < eqs[1].x))
    print(f"\nsigma = {SIGMA}: {N_PATHS} paths from x_star over t in [0, {HORIZON:g}]")
    print(f"  endpoints below the repeller: {left}, above: {N_PATHS - left}")

    fig, (ax1, ax2) = plt.subplots(
        1, 2, figsize=(11, 4.5), gridspec_kw={"width_ratios": (3, 1)}, sharey=True
    )
    for rec in recs:
        ax1.plot(rec.t, rec.x, lw=0.7, alpha=0.8)
    for rec in det:
        ax1.plot(rec.t[rec.t <= HORIZON], rec.x[rec.t <= HORIZON], "k--", lw=1.3)
    for lvl, lab in ((x_lo, "$x_-$"), (sk, "$x_\\star$"), (x_hi, "$x_+$")):
        ax1.axhline(lvl, color="0.65", ls=":", lw=0.9)
        ax1.annotate(lab, (HORIZON * 0.98, lvl), fontsize=9, va="bottom", ha="right")
    ax1.set_xlabel("time")
    ax1.set_ylabel("phosphorus stock x")
    ax1.set_title(f"paths from the indifference point ($\\sigma = {SIGMA}$)")

    ax2.hist(finals, bins=16, orientation="horizontal", color="C0", alpha=0.8)
    ax2.set_xlabel("count")
    ax2.set_title(f"x({HORIZON:g})")
    fig.tight_layout()
    fig.savefig(OUT / "exit_paths.png", dpi=150)

    np.savetxt(
        OUT / "path_endpoints.csv",
        np.column_stack([np.arange(N_PATHS), finals]),
        delimiter=",",
        header="path,x_final",
        comments="",
    )
    print(f"\nwrote {OUT / 'exit_paths.png'}")
    print(f"wrote {OUT / 'path_endpoints.csv'}")


if __name__ == "__main__":
    main()
