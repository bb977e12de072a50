"""Dominating patience coupling on shared randomness.

The original queue uses the capped family H(x) = x^2.  The dominating queue
reuses every inter-arrival and service time; a customer whose patience level
F^n(d) exceeds cap_level / sqrt(n) becomes infinitely patient, everyone else
keeps d.  The offered waits then satisfy V* >= V - nu_max along the whole
path, where nu_max is the largest service time seen so far.
"""
import argparse

from abandonq.limits import Polynomial
from abandonq.primitives import HeavyTrafficParams, PatienceFamily, PrimitiveSpec
from abandonq.scaling import DominatingFamily
from abandonq.simulator import SimConfig, simulate_coupled


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--n", type=int, default=100)
    ap.add_argument("--theta", type=float, default=0.5)
    ap.add_argument("--arrivals", type=int, default=1_000_000)
    ap.add_argument("--seeds", type=int, default=5)
    args = ap.parse_args()

    fam = PatienceFamily.capped(Polynomial([0.0, 0.0, 1.0]))
    params = HeavyTrafficParams(1.0, args.theta, args.n)
    print(f"{'sigma_bar':>9s} {'cap':>6s} {'seed':>4s} {'E sqrt(n)V':>11s} {'E sqrt(n)V*':>12s} "
          f"{'P_a':>8s} {'P_a*':>8s} {'max violation':>14s}")
    for sigma_bar in (0.25, 1.0, 4.0):
        dom = DominatingFamily(fam, 1.0, args.theta, sigma_bar=sigma_bar)
        for seed in range(args.seeds):
            cfg = SimConfig(params, PrimitiveSpec.lognormal(0.5), PrimitiveSpec.exponential(),
                            fam, num_arrivals=args.arrivals, num_batches=8, seed=seed)
            res, dres, viol = simulate_coupled(cfg, dom)
            print(f"{sigma_bar:9.2f} {dom.cap_level:6.2f} {seed:4d} "
                  f"{res.scaled_moments[1.0].value:11.4f} {dres.scaled_moments[1.0].value:12.4f} "
                  f"{res.abandon_fraction.value:8.5f} {dres.abandon_fraction.value:8.5f} "
                  f"{viol:14.3e}")
    # a negative max violation means V* stayed above V - nu_max with room to spare


if __name__ == "__main__":
    main()
