"""Sanity check of the simulator against M/M/1 without abandonment.

At n=1 the offered wait is the ordinary virtual waiting time, whose
stationary mean is rho / (mu - lam).  Runs a few loads and prints the
batch-means estimate next to the formula.
"""
import argparse

from abandonq.primitives import HeavyTrafficParams, PatienceFamily, PrimitiveSpec
from abandonq.simulator import SimConfig, simulate


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--arrivals", type=int, default=2_000_000)
    ap.add_argument("--seed", type=int, default=1)
    args = ap.parse_args()

    exp = PrimitiveSpec.exponential()
    print(f"{'rho':>5s} {'exact':>9s} {'estimate':>9s} {'3se':>8s}  inside")
    for theta in (-1.0, -0.5, -0.25, -0.1):
        params = HeavyTrafficParams(1.0, theta, 1)
        mu = params.service_rate
        rho = 1.0 / mu
        exact = rho / (mu - 1.0)
        cfg = SimConfig(params, exp, exp, PatienceFamily.no_abandonment(),
                        num_arrivals=args.arrivals, seed=(args.seed, int(-100 * theta)))
        est = simulate(cfg).scaled_moments[1.0]
        inside = abs(est.value - exact) <= est.half_width
        print(f"{rho:5.3f} {exact:9.4f} {est.value:9.4f} {est.half_width:8.4f}  {inside}")
    # at rho close to 1 the relaxation time grows like (1 - rho)^-2, so the
    # last row needs many more arrivals before the interval is trustworthy


if __name__ == "__main__":
    main()
