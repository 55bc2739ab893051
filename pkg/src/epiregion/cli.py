"""Command line entry point: ``epiregion <subcommand> --scenario s.json --out dir``.

Exit codes: 0 success, 2 invalid input, 3 numerical failure. Failures print a
one-line JSON error object on stderr.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import hashlib
import json
import os
import sys
import time
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from importlib.metadata import PackageNotFoundError, version
from pathlib import Path

import numpy as np
from threadpoolctl import threadpool_limits

from .control import certify, optimize_translation, run_feedback
from .errors import ComplementDisconnectedWarning, ModelValidationError, NumericalError
from .integrator import build_system, simulate, write_field_csv
from .scenario import Scenario, load_scenario
from .spectral import (
    principal_eigenvalue_dirichlet_complement,
    principal_eigenvalue_homogeneous,
    principal_eigenvalue_logistic,
    periodic_principal_eigenvalue,
)

EXIT_OK, EXIT_VALIDATION, EXIT_NUMERICAL = 0, 2, 3


def artifact_version() -> str:
    try:
        return version("artifact")
    except PackageNotFoundError:
        return "0+unknown"


def threads() -> int:
    return int(os.environ.get("EPIREGION_THREADS", "1"))


def sha256_file(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def _write_json(path: Path, obj) -> Path:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True, default=_jsonable) + "\n")
    return path


def _jsonable(x):
    if isinstance(x, np.ndarray):
        return x.tolist()
    if isinstance(x, np.generic):
        return x.item()
    raise TypeError(f"cannot serialize {type(x).__name__}")


@dataclass
class RunRecord:
    command: str
    scenario: str
    scenario_digest: str
    version: str
    threads: int
    outputs: list = field(default_factory=list)  # [{"path", "sha256"}]
    steps: int = 0
    wall_clock: float = 0.0
    summary: dict = field(default_factory=dict)

    def add(self, path: Path, root: Path):
        self.outputs.append({"path": str(path.relative_to(root)), "sha256": sha256_file(path)})

    def save(self, root: Path) -> Path:
        return _write_json(root / "run_record.json", dataclasses.asdict(self))


# ---------------------------------------------------------------------------
# subcommands; each returns (written files, step count, summary dict)


def cmd_simulate(sc: Scenario, out: Path, args):
    domain, ops, model, region, initial, solver = sc.build()
    files = []
    if region is not None and sc.gamma > 0:
        traj, report = run_feedback(initial, ops, model, region, sc.gamma, solver, certify_mode=None)
        summary = {"lambda_gamma": report.lambda_gamma, "decay_rate": report.decay_rate, "notes": report.notes}
    else:
        traj = simulate(initial, build_system(model, ops, region), solver)
        summary = {}
    files.append(traj.to_csv(out / "trajectory.csv"))
    files += traj.export_snapshots(out / "snapshots", domain)
    summary.update(final_sup=traj.sup_norms[-1].tolist(), min_value=traj.min_value)
    return files, traj.n_steps, summary


def cmd_eigen(sc: Scenario, out: Path, args):
    domain, ops, model, region, initial, solver = sc.build()
    e = sc.data["eigen"]
    result, fields = {}, {}
    if args.mode == "periodic":
        if region is None:
            raise ModelValidationError("periodic eigenproblem needs a control region")
        a21, local = model.linear_slope, (model.foi or model.response).slope_at_zero
        cfg = sc.periodic_config()
        per = periodic_principal_eigenvalue(ops, model, region, model.seasonality, a21, cfg)
        per_local = periodic_principal_eigenvalue(ops, model, region, model.seasonality, local, cfg)
        result["periodic"], result["periodic_local"] = per.record(), per_local.record()
        fields = {"phi_t0": per.phi[0], "phi_local_t0": per_local.phi[0]}
    else:
        if args.method in ("direct", "both"):
            pair = principal_eigenvalue_homogeneous(ops, model, region, sc.gamma)
            result["direct"], fields["phi"] = pair.record(), pair.vector
        if args.method in ("logistic", "both"):
            est = principal_eigenvalue_logistic(
                ops, model, region, sc.gamma, zeta=e["zeta"], y0=e["y0"], config=sc.logistic_config())
            result["logistic"] = est.record()
            if est.profile is not None:
                fields["logistic_profile"] = est.profile
        if args.method == "both":
            a, b = result["direct"]["lambda"], result["logistic"]["lambda"]
            tol = e["agreement"] * max(1.0, abs(a))
            result["delta"], result["tolerance"] = abs(a - b), tol
            if abs(a - b) > tol:
                _write_json(out / "eigen.json", result)
                raise NumericalError(f"direct {a:.10g} and logistic {b:.10g} disagree by {abs(a - b):.3g} > {tol:.3g}")
    files = [_write_json(out / "eigen.json", result)]
    if fields:
        write_field_csv(out / "eigenvector.csv", domain, fields)
        files.append(out / "eigenvector.csv")
    return files, 0, result


def cmd_certify(sc: Scenario, out: Path, args):
    domain, ops, model, region, initial, solver = sc.build()
    if region is None:
        raise ModelValidationError("certify needs a control region")
    report = certify(ops, model, region, sc.gamma, mode=args.mode, periodic_config=sc.periodic_config())
    path = report.to_json(out / "certify.json")
    return [path], 0, {"verdict": report.verdict}


def cmd_optimize(sc: Scenario, out: Path, args):
    scenario = sc.control_scenario(args.domain_flag)
    region = sc.region(scenario.operators.domain)
    if region is None:
        raise ModelValidationError("optimize-region needs an initial region")
    diag = out / "gradients.csv"
    path = optimize_translation(region, scenario, sc.optimizer_config(), diagnostics=diag)
    files = [path.to_json(out / "path.json"), diag]
    steps = scenario.solver.n_steps * len(path.R_values)
    return files, steps, {"termination": path.termination, "R_initial": path.R_values[0],
                          "R_final": path.R_values[-1], "center_final": list(map(float, path.centers[-1]))}


def cmd_compare(sc: Scenario, out: Path, args):
    domain, ops, model, region, initial, solver = sc.build()
    e = sc.data["eigen"]
    rows = []
    direct = principal_eigenvalue_homogeneous(ops, model, region, sc.gamma).eigenvalue
    logistic = principal_eigenvalue_logistic(ops, model, region, sc.gamma, zeta=e["zeta"], y0=e["y0"],
                                             config=sc.logistic_config()).estimate
    rows.append(("lambda_gamma", "direct", direct, "logistic", logistic))
    if region is not None:
        comp = principal_eigenvalue_dirichlet_complement(ops, model, region).eigenvalue
        flat = dataclasses.replace(model.seasonality, depth=0.0)
        per = periodic_principal_eigenvalue(ops, model, region, flat, model.linear_slope,
                                            sc.periodic_config()).eigenvalue
        rows.append(("lambda_omega", "direct", comp, "periodic-reduction", per))
    path = out / "compare_eigen.csv"
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["quantity", "reference", "value", "alternative", "alt_value", "delta"])
        for q, r, a, s, b in rows:
            w.writerow([q, r, repr(a), s, repr(b), repr(abs(a - b))])
    return [path], 0, {q: {"reference": a, "alternative": b, "delta": abs(a - b)} for q, _, a, _, b in rows}


HANDLERS = {
    "simulate": cmd_simulate,
    "eigen": cmd_eigen,
    "certify": cmd_certify,
    "optimize-region": cmd_optimize,
    "compare-eigen": cmd_compare,
}


def run_one(command: str, scenario_path: str, out: str, args) -> dict:
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    t0 = time.perf_counter()
    with threadpool_limits(limits=threads()), warnings.catch_warnings():
        warnings.simplefilter("ignore", ComplementDisconnectedWarning)
        sc = load_scenario(scenario_path)
        files, steps, summary = HANDLERS[command](sc, out, args)
    rec = RunRecord(command=command, scenario=str(scenario_path), scenario_digest=sc.digest,
                    version=artifact_version(), threads=threads(), steps=steps, summary=summary)
    for f in files:
        rec.add(Path(f), out)
    rec.wall_clock = time.perf_counter() - t0
    rec.save(out)
    return dataclasses.asdict(rec)


def _guarded(command, scenario_path, out, args):
    try:
        return EXIT_OK, run_one(command, scenario_path, out, args)
    except ModelValidationError as exc:
        return EXIT_VALIDATION, _error(exc, scenario_path)
    except NumericalError as exc:
        return EXIT_NUMERICAL, _error(exc, scenario_path)


def _error(exc, scenario_path) -> dict:
    return {"error": type(exc).__name__, "message": str(exc), "scenario": str(scenario_path)}


def cmd_report(args) -> int:
    rows = []
    for p in args.records:
        p = Path(p)
        rec_path = p / "run_record.json" if p.is_dir() else p
        rec = json.loads(rec_path.read_text())
        rows.append({
            "record": str(rec_path),
            "command": rec["command"],
            "scenario": rec["scenario"],
            "digest": rec["scenario_digest"],
            "version": rec["version"],
            "threads": rec["threads"],
            "steps": rec["steps"],
            "wall_clock": rec["wall_clock"],
            "outputs": len(rec["outputs"]),
            "summary": json.dumps(rec["summary"], sort_keys=True, default=_jsonable),
        })
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    with (out / "summary.csv").open("w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=list(rows[0]) if rows else ["record"])
        w.writeheader()
        w.writerows(rows)
    print(json.dumps({"summary": str(out / "summary.csv"), "records": len(rows)}))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="epiregion", description="Regional control of nonlocal epidemic models.")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in HANDLERS:
        p = sub.add_parser(name)
        p.add_argument("--scenario", action="append", required=True, help="scenario JSON (repeatable)")
        p.add_argument("--out", default="out", help="output directory")
        p.add_argument("--jobs", type=int, default=1, help="parallel scenarios")
        if name == "eigen":
            p.add_argument("--method", choices=("direct", "logistic", "both"), default="both")
        if name in ("eigen", "certify"):
            p.add_argument("--mode", choices=("homogeneous", "periodic"), default="homogeneous")
        if name == "optimize-region":
            p.add_argument("--domain-flag", choices=("whole", "region"), default=None)
    p = sub.add_parser("report")
    p.add_argument("records", nargs="+", help="run directories or run_record.json files")
    p.add_argument("--out", default="out")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "report":
        return cmd_report(args)
    scenarios = args.scenario
    outs = [args.out] if len(scenarios) == 1 else [str(Path(args.out) / Path(s).stem) for s in scenarios]
    if args.jobs > 1 and len(scenarios) > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            results = list(pool.map(_guarded, [args.command] * len(scenarios), scenarios, outs,
                                    [args] * len(scenarios)))
    else:
        results = [_guarded(args.command, s, o, args) for s, o in zip(scenarios, outs)]
    status = max(code for code, _ in results)
    for code, payload in results:
        if code == EXIT_OK:
            print(json.dumps({"scenario": payload["scenario"], "summary": payload["summary"]},
                             sort_keys=True, default=_jsonable))
        else:
            print(json.dumps(payload, sort_keys=True), file=sys.stderr)
    return status


if __name__ == "__main__":
    sys.exit(main())
