"""Ensemble NEES against the chi-square band for matched and RK4 truth."""

import argparse
from dataclasses import replace

import numpy as np

from reentry_ekf.harness import monte_carlo, nees_band
from reentry_ekf.sim import ScenarioConfig


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--runs", type=int, default=200)
    ap.add_argument("--beta", type=float, default=500.0)
    args = ap.parse_args()
    lo, hi = nees_band(args.runs)
    print(f"95% band for {args.runs} runs: [{lo:.3f}, {hi:.3f}]")
    for integrator in ("euler", "rk4"):
        cfg = replace(ScenarioConfig(beta=args.beta), truth_integrator=integrator)
        res = monte_carlo(cfg, args.runs)
        nees = np.mean([m.mean_nees for m in res.metrics])
        verdict = "inside" if lo <= nees <= hi else "outside"
        print(f"truth={integrator:5s} mean NEES {nees:9.3f}  ({verdict})")


if __name__ == "__main__":
    main()
