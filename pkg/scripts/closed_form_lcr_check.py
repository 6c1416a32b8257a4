"""Compare the closed-form uncorrelated crossing rate with simulation.

For M independent branches it prints, per threshold, the closed-form value, the
Rice-formula value sqrt(2b/pi) s^(M-1/2) e^-s / (M-1)!, the value from the
general correlated integral with identity correlation, and the Monte Carlo
estimate.
"""

import argparse
import math

import numpy as np

from movarray import ArrayGeometry, ChannelParams, SimConfig, lcr_correlated, lcr_uncorrelated
from movarray.analytic import build_lcr_context
from movarray.correlation import uncorrelated_set
from movarray.simulate import simulate_stats


def main(argv=None) -> None:
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--M", type=int, nargs="+", default=[1, 4])
    p.add_argument("--realizations", type=int, default=10_000)
    p.add_argument("--seed", type=int, default=0)
    args = p.parse_args(argv)
    params = ChannelParams()
    b = math.pi ** 2
    for M in args.M:
        th = np.array([0.5, 1.0, 2.0, 4.0, 8.0]) * M ** 0.5
        st = simulate_stats(ArrayGeometry(M, 0.5, 1.0), params,
                            SimConfig(2048, args.realizations, args.seed), th, independent=True)
        mc, se = st.lcr()
        ctx = build_lcr_context(uncorrelated_set(M), params)
        print(f"M = {M}")
        print("  s         closed-form  rice         integral     monte-carlo")
        for k, s in enumerate(th):
            rice = math.sqrt(2 * b / math.pi) * s ** (M - 0.5) * math.exp(-s) / math.factorial(M - 1)
            print(f"  {s:<8.4g}  {lcr_uncorrelated(s, M, params):<11.5g}  {rice:<11.5g}  "
                  f"{lcr_correlated(s, ctx):<11.5g}  {mc[k]:.5g} ± {se[k]:.2g}")


if __name__ == "__main__":
    main()
