import csv
import json
from pathlib import Path

import numpy as np
import pytest

from epiregion.cli import EXIT_NUMERICAL, EXIT_OK, EXIT_VALIDATION, main
from epiregion.errors import ParseError, ValidationError
from epiregion.scenario import load_scenario, parse_scenario

SCENARIOS = Path(__file__).resolve().parents[1] / "scenarios"
ALL = sorted(SCENARIOS.glob("*.json"))


def raw(name):
    return json.loads((SCENARIOS / f"{name}.json").read_text())


def dumped(data):
    return json.dumps(data, indent=2)


class TestScenario:
    @pytest.mark.parametrize("path", ALL, ids=lambda p: p.stem)
    def test_bundled_scenarios_build(self, path):
        sc = load_scenario(path)
        domain, ops, model, region, initial, solver = sc.build()
        assert initial.values.shape == (len(initial.names), domain.n)
        assert np.all(initial.values >= 0)

    def test_digest_ignores_formatting_and_round_trips(self, tmp_path):
        data = raw("reference")
        a = parse_scenario(dumped(data))
        b = parse_scenario(json.dumps(data, separators=(",", ":")))
        assert a.digest == b.digest and len(a.digest) == 64
        reloaded = load_scenario(a.save(tmp_path / "s.json"))
        assert reloaded.digest == a.digest and reloaded.data == a.data

    def test_digest_changes_with_content(self):
        data = raw("reference")
        base = parse_scenario(dumped(data)).digest
        data["gamma"] = 6.0
        assert parse_scenario(dumped(data)).digest != base

    def test_negative_kernel_amplitude(self):
        data = raw("reference")
        data["kernel"]["amplitude"] = -1.0
        with pytest.raises(ValidationError, match="kernel nonnegativity"):
            parse_scenario(dumped(data))

    def test_negative_initial_data(self):
        data = raw("reference")
        data["initial"]["u1"] = {"kind": "constant", "value": -0.1}
        with pytest.raises(ValidationError, match="nonnegativity"):
            parse_scenario(dumped(data))

    def test_dt_above_bound(self):
        data = raw("reference")
        data["solver"]["dt"] = 10.0
        with pytest.raises(ValidationError, match="positivity bound"):
            parse_scenario(dumped(data))

    def test_gamma_without_region(self):
        data = raw("reference")
        del data["region"]
        with pytest.raises(ValidationError, match="region"):
            parse_scenario(dumped(data))

    def test_malformed_json_reports_line(self):
        text = dumped(raw("reference")).replace('"gamma": 5.0', '"gamma": 5.0,,')
        with pytest.raises(ParseError) as info:
            parse_scenario(text)
        assert info.value.where.startswith("line ")

    def test_schema_error_reports_field_path(self):
        data = raw("reference")
        data["kernel"]["sigma"] = "wide"
        with pytest.raises(ParseError) as info:
            parse_scenario(dumped(data))
        assert info.value.where == "kernel/sigma"

    def test_from_file_field(self, tmp_path):
        data = raw("reference")
        n = data["domain"]["nodes"][0]
        with (tmp_path / "u.csv").open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["node", "x", "u"])
            for i in range(n):
                w.writerow([i, i / (n - 1), 0.5])
        data["initial"]["u1"] = {"kind": "from-file", "path": "u.csv", "column": "u"}
        sc = parse_scenario(dumped(data), base_dir=tmp_path)
        assert np.all(sc.build()[4].values[0] == 0.5)


def run(argv, capsys):
    code = main(argv)
    out, err = capsys.readouterr()
    return code, out, err


class TestCli:
    def test_simulate_is_deterministic(self, tmp_path, capsys):
        s = str(SCENARIOS / "reference.json")
        hashes = []
        for k in range(2):
            code, out, _ = run(["simulate", "--scenario", s, "--out", str(tmp_path / f"r{k}")], capsys)
            assert code == EXIT_OK
            rec = json.loads((tmp_path / f"r{k}" / "run_record.json").read_text())
            hashes.append({o["path"]: o["sha256"] for o in rec["outputs"]})
            assert rec["threads"] >= 1 and rec["steps"] > 0 and len(rec["scenario_digest"]) == 64
        assert hashes[0] == hashes[1] and "trajectory.csv" in hashes[0]

    def test_eigen_both_agree(self, tmp_path, capsys):
        code, out, _ = run(["eigen", "--scenario", str(SCENARIOS / "reference.json"), "--out", str(tmp_path)], capsys)
        assert code == EXIT_OK
        result = json.loads((tmp_path / "eigen.json").read_text())
        assert result["delta"] <= result["tolerance"]
        assert (tmp_path / "eigenvector.csv").exists()

    def test_eigen_disagreement_exits_numerical(self, tmp_path, capsys):
        data = raw("reference")
        data["eigen"] = {"agreement": 1e-16, "tol": 1e-6}
        p = tmp_path / "tight.json"
        p.write_text(dumped(data))
        code, _, err = run(["eigen", "--scenario", str(p), "--out", str(tmp_path / "o")], capsys)
        assert code == EXIT_NUMERICAL
        assert json.loads(err.splitlines()[0])["error"] == "NumericalError"

    def test_invalid_scenario_exits_validation(self, tmp_path, capsys):
        data = raw("reference")
        data["kernel"]["amplitude"] = -2.0
        p = tmp_path / "bad.json"
        p.write_text(dumped(data))
        code, _, err = run(["simulate", "--scenario", str(p), "--out", str(tmp_path / "o")], capsys)
        assert code == EXIT_VALIDATION
        msg = json.loads(err.splitlines()[0])
        assert msg["error"] == "ValidationError" and "kernel nonnegativity" in msg["message"]

    def test_certify_decoupled(self, tmp_path, capsys):
        code, out, _ = run(["certify", "--scenario", str(SCENARIOS / "decoupled.json"), "--out", str(tmp_path)],
                           capsys)
        assert code == EXIT_OK
        assert json.loads(out.splitlines()[0])["summary"]["verdict"] == "zero-stabilizable"

    def test_optimize_and_report(self, tmp_path, capsys):
        a, b = tmp_path / "opt", tmp_path / "cmp"
        code, _, _ = run(["optimize-region", "--scenario", str(SCENARIOS / "hotspot_left.json"), "--out", str(a)],
                         capsys)
        assert code == EXIT_OK
        path = json.loads((a / "path.json").read_text())
        assert path["centers"][-1][0] < path["centers"][0][0]
        code, _, _ = run(["compare-eigen", "--scenario", str(SCENARIOS / "reference.json"), "--out", str(b)], capsys)
        assert code == EXIT_OK
        code, out, _ = run(["report", str(a), str(b / "run_record.json"), "--out", str(tmp_path)], capsys)
        assert code == EXIT_OK
        with (tmp_path / "summary.csv").open() as fh:
            rows = list(csv.DictReader(fh))
        assert [r["command"] for r in rows] == ["optimize-region", "compare-eigen"]

    def test_multiple_scenarios_in_parallel(self, tmp_path, capsys):
        ss = [str(SCENARIOS / "reference.json"), str(SCENARIOS / "decoupled.json")]
        argv = ["certify", "--jobs", "2", "--out", str(tmp_path)]
        for s in ss:
            argv += ["--scenario", s]
        code, out, _ = run(argv, capsys)
        assert code == EXIT_OK and len(out.splitlines()) == 2
        assert (tmp_path / "reference" / "certify.json").exists()
        assert (tmp_path / "decoupled" / "certify.json").exists()
