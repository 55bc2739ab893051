"""Sweep the feedback gain and compare direct, logistic and complement eigenvalues.

    python3 scripts/eigen_cross_check.py --scenario scenarios/reference.json --out runs/eigen
"""

import argparse
import csv
from pathlib import Path

import numpy as np

from epiregion.scenario import load_scenario
from epiregion.spectral import (
    principal_eigenvalue_dirichlet_complement,
    principal_eigenvalue_homogeneous,
    principal_eigenvalue_logistic,
)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--scenario", default="scenarios/reference.json")
    ap.add_argument("--gammas", type=float, nargs="+", default=list(np.geomspace(0.1, 1000, 9)))
    ap.add_argument("--out", default="runs/eigen_cross_check")
    args = ap.parse_args()

    sc = load_scenario(args.scenario)
    _, ops, model, region, _, _ = sc.build()
    barrier = principal_eigenvalue_dirichlet_complement(ops, model, region).eigenvalue
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    with (out / "gamma_sweep.csv").open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["gamma", "direct", "logistic", "delta", "lambda_omega"])
        for g in args.gammas:
            d = principal_eigenvalue_homogeneous(ops, model, region, g).eigenvalue
            e = principal_eigenvalue_logistic(ops, model, region, g, config=sc.logistic_config()).estimate
            w.writerow([g, d, e, abs(d - e), barrier])
            print(f"gamma={g:10.4g}  direct={d: .8f}  logistic={e: .8f}  |d|={abs(d - e):.1e}  "
                  f"lambda_omega={barrier: .6f}")


if __name__ == "__main__":
    main()
