"""Stationary law of the limiting reflected diffusion for a few hazard shapes.

For each model the density is normalized by quadrature, then a reflected
Euler run of the SDE is compared with the quadrature mean.  Pass --plot to
write the densities to stationary_law.svg.
"""
import argparse
import math

import numpy as np

from abandonq.diffusion import DiffusionModel, build_stationary, simulate_sde
from abandonq.limits import Polynomial, Tabulated

MODELS = {
    "no abandonment, theta=-1": DiffusionModel(1.0, -1.0, Polynomial([0.0])),
    "H(x)=x, theta=0": DiffusionModel(2.0, 0.0, Polynomial([0.0, 1.0])),
    "H(x)=x^2, theta=0.5": DiffusionModel(1.0, 0.5, Polynomial([0.0, 0.0, 1.0])),
    # a piecewise-linear H as produced from a patience table
    "tabulated H, theta=1": DiffusionModel(1.0, 1.0, Tabulated([0, 1, 2, 3], [0, 0.2, 1.5, 4])),
}


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--T", type=float, default=2e4, help="SDE horizon")
    ap.add_argument("--dt", type=float, default=1e-3)
    ap.add_argument("--plot", action="store_true")
    args = ap.parse_args()

    print(f"{'model':28s} {'f(0)':>9s} {'mean':>9s} {'E[V^2]':>9s} {'median':>9s} "
          f"{'E[H(V)]':>9s} {'SDE mean':>18s}")
    stats = {}
    for seed, (name, model) in enumerate(MODELS.items()):
        stat = build_stationary(model)
        stats[name] = stat
        sde = simulate_sde(model, dt=args.dt, T=args.T, seed=seed).moments[1.0]
        print(f"{name:28s} {float(stat.pdf(0.0)):9.5f} {stat.moment(1):9.5f} "
              f"{stat.moment(2):9.5f} {stat.quantile(0.5):9.5f} {stat.expect_H():9.5f} "
              f"{sde.value:9.5f} +- {sde.half_width:.4f}")

    print(f"\nclosed forms: Exp(2) median ln2/2 = {math.log(2) / 2:.5f}, "
          f"half-normal mean sqrt(2/pi) = {math.sqrt(2 / math.pi):.5f}")

    if args.plot:
        import matplotlib
        matplotlib.use("Agg")
        import matplotlib.pyplot as plt
        fig, ax = plt.subplots(figsize=(6, 4))
        for name, stat in stats.items():
            xs = np.linspace(0, min(stat.x_cut, 4.0), 400)
            ax.plot(xs, stat.pdf(xs), label=name)
        ax.set_xlabel("x")
        ax.set_ylabel("stationary density")
        ax.legend()
        fig.tight_layout()
        fig.savefig("stationary_law.svg")
        print("wrote stationary_law.svg")


if __name__ == "__main__":
    main()
