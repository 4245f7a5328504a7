"""The quasi-potential landscape and how noise tilts it.

Builds the log-coordinate potential F_0 from the deterministic candidate
(double well: minima at the saddle stocks, barrier at the Skiba point) and
then F_sigma for increasing noise, showing the left well shallowing until
it disappears.  Writes the landscape figure and the well/barrier table into
demos/output/.
"""

import dataclasses
import math
import pathlib

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from lakelab import hjb, metastability, pontryagin
from lakelab.model import LakeParams, hill_curve

OUT = pathlib.Path(__file__).with_name("output")
SIGMAS = (0.1, 0.2, 0.3)


def main():
    OUT.mkdir(exist_ok=True)
    params = LakeParams(b=0.65, c=0.512, rho=0.03)
    curve = hill_curve()
    spec = hjb.GridSpec(20.0, 4096)

    cand = pontryagin.build_candidate(params, curve, x_max=20.0)
    vf0 = hjb.from_candidate(cand, spec)
    pot0 = metastability.build_potential(vf0, params, curve)
    ym, yp = pot0.wells
    print("deterministic potential F_0:")
    print(f"  wells at x = {math.exp(ym):.6f}, {math.exp(yp):.6f} (the saddles)")
    print(f"  barrier at x = {math.exp(pot0.barrier):.6f} (the Skiba point)")
    print(f"  right barrier height dF0 = {pot0.barrier_height:.6f}")

    ys = np.linspace(math.log(0.15), math.log(4.0), 1200)
    fig, ax = plt.subplots(figsize=(7, 4.5))
    ax.plot(np.exp(ys), pot0.value(ys), "k-", lw=1.6, label="$F_0$")
    for w in pot0.wells:
        ax.plot(math.exp(w), pot0.value(w), "kv", ms=6)
    ax.plot(math.exp(pot0.barrier), pot0.value(pot0.barrier), "k^", ms=6)

    for s in SIGMAS:
        ps = dataclasses.replace(params, sigma=s)
        vf, _ = hjb.solve_hjb(ps, curve, spec)
        pot = metastability.build_potential(
            vf, params, curve, require_double_well=False
        )
        kind = "double well" if pot.wells is not None else "single well"
        print(f"  sigma = {s}: F_sigma is {kind}")
        ax.plot(np.exp(ys), pot.value(ys), lw=1.1, label=f"$F_\\sigma$, $\\sigma={s}$")

    ax.set_xscale("log")
    ax.set_xlabel("phosphorus stock x (log scale)")
    ax.set_ylabel("potential F")
    ax.set_title("noise tilts the double well until the clean basin vanishes")
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(OUT / "potential_landscape.png", dpi=150)

    np.savetxt(
        OUT / "potential_f0.csv",
        np.column_stack([np.exp(pot0.y), pot0.F, pot0.Fp]),
        delimiter=",",
        header="x,F0,dF0_dy",
        comments="",
    )
    print(f"\nwrote {OUT / 'potential_landscape.png'}")
    print(f"wrote {OUT / 'potential_f0.csv'} ({pot0.y.size} rows)")


if __name__ == "__main__":
    main()
