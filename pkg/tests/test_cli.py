"""Command line interface: exit codes, report formats, output files."""

import json
import subprocess
import sys

import pytest

import stochsym.cli as cli
from stochsym.errors import ReliabilityError

VERIFY_OPS = ["determining_equations", "quasi_doob", "algebra_closure",
              "straightening", "triangular"]
REDUCE_OPS = ["reduced_form", "straightening", "triangular"]


def _load(path):
    with open(path) as fh:
        return json.load(fh)


def test_verify_passes_and_reports_five_blocks(tmp_path):
    out = tmp_path / "verify.json"
    code = cli.main(["verify", "--model", "bessel", "--route", "doob",
                     "--points", "40", "--out", str(out)])
    assert code == 0
    doc = _load(out)
    assert doc["config"]["model"] == "bessel"
    assert doc["config"]["route"] == "doob"
    assert [r["op"] for r in doc["reports"]] == VERIFY_OPS
    assert all(r["pass"] for r in doc["reports"])
    assert doc["reports"][1]["extra"]["doob"] is True


def test_verify_marks_quasi_doob_not_applicable(tmp_path):
    out = tmp_path / "verify.json"
    code = cli.main(["verify", "--model", "twod", "--points", "30",
                     "--out", str(out)])
    assert code == 0
    doc = _load(out)
    block = doc["reports"][1]
    assert block["op"] == "quasi_doob"
    assert block["extra"]["applicable"] is False
    assert block["points"] == 0


def test_verify_param_override_lands_in_config(tmp_path):
    out = tmp_path / "verify.json"
    code = cli.main(["verify", "--model", "cir", "--param", "k=1.0",
                     "--param", "b=0.8", "--points", "30", "--out", str(out)])
    assert code == 0
    doc = _load(out)
    assert doc["config"]["parameters"]["k"] == 1.0
    assert doc["config"]["parameters"]["b"] == 0.8


def test_verify_unknown_model_is_config_error(capsys):
    assert cli.main(["verify", "--model", "nosuch"]) == 2
    assert "config error" in capsys.readouterr().err


def test_verify_bad_param_is_config_error():
    assert cli.main(["verify", "--model", "ou", "--param", "gamma=1"]) == 2
    assert cli.main(["verify", "--model", "ou", "--param", "a"]) == 2


def test_verify_csv_is_rejected():
    assert cli.main(["verify", "--model", "ou", "--format", "csv"]) == 2


def test_verify_impossible_tolerance_fails_but_reports(tmp_path):
    out = tmp_path / "verify.json"
    code = cli.main(["verify", "--model", "ou", "--points", "30",
                     "--tol", "1e-15", "--out", str(out)])
    assert code == 1
    doc = _load(out)
    assert [r["op"] for r in doc["reports"]] == VERIFY_OPS
    assert not all(r["pass"] for r in doc["reports"])


def test_reduce_reports_three_blocks(tmp_path):
    out = tmp_path / "reduce.json"
    code = cli.main(["reduce", "--model", "cir", "--points", "40",
                     "--out", str(out)])
    assert code == 0
    doc = _load(out)
    assert [r["op"] for r in doc["reports"]] == REDUCE_OPS
    assert all(r["pass"] for r in doc["reports"])


def test_json_reports_use_sorted_keys(tmp_path):
    out = tmp_path / "verify.json"
    cli.main(["verify", "--model", "ou", "--points", "25", "--out", str(out)])
    text = out.read_text()
    doc = json.loads(text)
    assert text == json.dumps(doc, indent=2, sort_keys=True) + "\n"
    assert "version" in doc


def test_reconstruct_json_report(tmp_path):
    out = tmp_path / "rec.json"
    code = cli.main(["reconstruct", "--model", "ou", "--t", "0.5,1.0",
                     "--paths", "2000", "--dt", "1e-2", "--seed", "7",
                     "--out", str(out)])
    assert code == 0
    doc = _load(out)
    assert doc["config"]["paths"] == 2000
    assert doc["degenerate_weights"] is False
    comps = doc["result"]["comparisons"]
    assert [c["time"] for c in comps] == [0.5, 1.0]
    assert all(abs(c["z_score"]) <= 3.0 for c in comps)
    assert doc["result"]["oracle"][0]["value"] == pytest.approx(
        0.8032653298563167, abs=1e-12)


def test_reconstruct_csv_schema(tmp_path):
    out = tmp_path / "rec.csv"
    code = cli.main(["reconstruct", "--model", "ou", "--t", "1.0",
                     "--paths", "1500", "--dt", "1e-2", "--format", "csv",
                     "--out", str(out)])
    assert code == 0
    lines = out.read_text().strip().split("\n")
    assert lines[0] == "model,route,time,estimator,value,stderr,n_effective,rejected_frac"
    assert len(lines) == 3
    assert lines[1].startswith("ou,canonical,1.0,direct,")
    assert lines[2].startswith("ou,canonical,1.0,reconstructed,")


def test_reconstruct_single_path_is_config_error():
    assert cli.main(["reconstruct", "--model", "ou", "--paths", "1"]) == 2


def test_reconstruct_bad_times_are_config_errors():
    base = ["reconstruct", "--model", "ou", "--paths", "100", "--dt", "1e-2"]
    assert cli.main(base + ["--t", "1.0,0.5"]) == 2
    assert cli.main(base + ["--t", "0"]) == 2
    assert cli.main(base + ["--t", "abc"]) == 2


def test_reconstruct_degenerate_weights_exit(tmp_path):
    out = tmp_path / "rec.json"
    code = cli.main(["reconstruct", "--model", "ou", "--param", "c=3.0",
                     "--t", "1.0", "--paths", "400", "--dt", "1e-2",
                     "--out", str(out)])
    assert code == 1
    assert _load(out)["degenerate_weights"] is True


def test_numeric_error_maps_to_exit_three(monkeypatch, capsys):
    def boom(*args, **kwargs):
        raise ReliabilityError("all paths rejected")
    monkeypatch.setattr(cli, "run_reconstruction", boom)
    code = cli.main(["reconstruct", "--model", "ou", "--paths", "100"])
    assert code == 3
    assert "numeric error" in capsys.readouterr().err


def test_all_with_model_filter(tmp_path):
    out = tmp_path / "all.json"
    code = cli.main(["all", "--models", "ou", "--points", "25",
                     "--paths", "1500", "--dt", "1e-2", "--t", "1.0",
                     "--out", str(out)])
    assert code == 0
    doc = _load(out)
    assert doc["config"]["models"] == ["ou"]
    assert [r["op"] for r in doc["verification"]] == VERIFY_OPS
    assert len(doc["reconstruction"]) == 1


def test_all_runs_both_bessel_routes(tmp_path):
    out = tmp_path / "all.json"
    code = cli.main(["all", "--models", "bessel", "--points", "20",
                     "--paths", "1500", "--dt", "1e-2", "--t", "1.0",
                     "--out", str(out)])
    assert code == 0
    doc = _load(out)
    routes = [r["route"] for r in doc["reconstruction"]]
    assert routes == ["lamperti", "doob"]


def test_all_rejects_bad_filters():
    assert cli.main(["all", "--models", "nosuch"]) == 2
    assert cli.main(["all", "--models", ","]) == 2


def test_console_script_installed(tmp_path):
    out = tmp_path / "verify.json"
    proc = subprocess.run(["stochsym", "verify", "--model", "ou",
                           "--points", "20", "--out", str(out)],
                          capture_output=True, text=True)
    assert proc.returncode == 0, proc.stderr
    assert _load(out)["config"]["model"] == "ou"


def test_module_entry_point():
    proc = subprocess.run([sys.executable, "-m", "stochsym.cli", "verify",
                           "--model", "nosuch"], capture_output=True, text=True)
    assert proc.returncode == 2
