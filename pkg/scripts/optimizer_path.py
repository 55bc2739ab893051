"""Translate the control region down the shape gradient and record the path."""

import argparse
from pathlib import Path

from epiregion.control import optimize_translation
from epiregion.scenario import load_scenario


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--scenario", default="scenarios/hotspot_left.json")
    ap.add_argument("--domain-flag", choices=("whole", "region"), default=None)
    ap.add_argument("--out", default="runs/optimizer_path")
    args = ap.parse_args()

    sc = load_scenario(args.scenario)
    scenario = sc.control_scenario(args.domain_flag)
    region = sc.region(scenario.operators.domain)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    path = optimize_translation(region, scenario, sc.optimizer_config(), diagnostics=out / "gradients.csv")
    path.to_json(out / "path.json")
    for k, (c, R) in enumerate(zip(path.centers, path.R_values)):
        print(f"iter {k:2d}  center={[round(float(v), 4) for v in c]}  R={R:.6f}")
    print(f"termination: {path.termination}")


if __name__ == "__main__":
    main()
