from __future__ import annotations

import json

import pytest

from main import EXIT_CHECK_FAILED, EXIT_INVALID_INPUT, EXIT_OK, main
from utils.output_tools import read_manifest_line

PAIR = {"type": "pair", "classes": [[{"id": "a", "weight": "1/2"}, {"id": "b", "weight": "1/2"}]]}
Z2 = {"type": "group", "preset": "Z_2"}


@pytest.fixture
def pair_files(write_json):
    return write_json("pair.json", PAIR), write_json("uniform.json", {"type": "uniform"})


def test_validate_accepts_pair_groupoid(pair_files, capsys):
    assert main(["validate", pair_files[0]]) == EXIT_OK
    payload = json.loads(capsys.readouterr().out)
    assert payload["valid"]
    assert payload["diagnostics"] == []
    assert payload["manifest"]["command"] == "validate"


def test_validate_flags_unnormalized_mass(write_json, capsys):
    heavy = {"type": "pair", "classes": [[{"id": "a", "weight": 1}, {"id": "b", "weight": 1}]]}
    assert main(["validate", write_json("heavy.json", heavy)]) == EXIT_INVALID_INPUT
    payload = json.loads(capsys.readouterr().out)
    assert [d["axiom"] for d in payload["diagnostics"]] == ["normalization"]


def test_norm_reports_sandwich(pair_files, capsys):
    assert main(["norm", *pair_files, "--exact"]) == EXIT_OK
    payload = json.loads(capsys.readouterr().out)
    assert payload["operator_norm"] == pytest.approx(1.0)
    assert payload["l2_norm"] == pytest.approx(0.5 ** 0.5)
    assert payload["ordered"]
    assert payload["linf_norm"] == "1"
    assert payload["manifest"]["precision"] == "rational"


def test_norm_exports_operator_entries(pair_files, tmp_path, capsys):
    target = tmp_path / "entries.csv"
    assert main(["norm", *pair_files, "--export-coo", str(target)]) == EXIT_OK
    capsys.readouterr()
    assert read_manifest_line(target.read_text(encoding="utf-8"))["command"] == "norm"


def test_radius_writes_csv_with_manifest(write_json, tmp_path, capsys):
    groupoid = write_json("z2.json", Z2)
    kernel = write_json("gens.json", {"type": "generators", "generators": ["1"]})
    assert main(["radius", groupoid, kernel, "--nmax", "8", "-o", str(tmp_path)]) == EXIT_OK
    text = (tmp_path / "radius.csv").read_text(encoding="utf-8")
    manifest = read_manifest_line(text)
    assert manifest["command"] == "radius"
    assert manifest["parameters"]["nmax"] == 8
    lines = text.splitlines()
    assert lines[1] == "n,return_probability_2n,r_n"
    assert len(lines) == 2 + 8


def test_kesten_verdicts(write_json, capsys):
    union = {
        "type": "union",
        "parts": [{"groupoid": PAIR, "scale": "1/2"}, {"groupoid": Z2, "scale": "1/2"}],
    }
    groupoid = write_json("union.json", union)
    kernel = write_json("uniform.json", {"type": "uniform"})
    assert main(["kesten", groupoid, kernel]) == EXIT_OK
    payload = json.loads(capsys.readouterr().out)
    assert payload["passed"]
    assert payload["checked_sets"] == 3


def test_kesten_rejects_drift(write_json, capsys):
    groupoid = write_json("pair.json", PAIR)
    kernel = write_json("drift.json", {"type": "matrix", "data": [[1, 0], [1, 0]], "orientation": "as-is"})
    assert main(["kesten", groupoid, kernel]) == EXIT_INVALID_INPUT
    error = json.loads(capsys.readouterr().err.strip().splitlines()[-1])
    assert error["error"] == "non_symmetric"


def test_walk_emits_one_row(pair_files, capsys):
    assert main(["walk", *pair_files, "--steps", "2", "--samples", "2000", "--seed", "5"]) == EXIT_OK
    lines = capsys.readouterr().out.splitlines()
    assert lines[1] == "n,N,p_hat,std_error,exact,z_score"
    assert lines[2].startswith("2,2000,")


def test_reproduce_targets(capsys):
    assert main(["reproduce", "appendix-b", "--kmax", "5"]) == EXIT_OK
    out = capsys.readouterr().out
    assert read_manifest_line(out)["command"] == "reproduce appendix-b"
    assert len(out.splitlines()) == 2 + 6

    assert main(["reproduce", "appendix-a", "--nmax", "4", "--exact"]) == EXIT_OK
    assert main(["reproduce", "free-group", "--radius", "3"]) == EXIT_OK
    capsys.readouterr()


def test_missing_file_is_reported_as_json(tmp_path, capsys):
    missing = str(tmp_path / "missing.json")
    assert main(["norm", missing, missing]) == EXIT_INVALID_INPUT
    error = json.loads(capsys.readouterr().err.strip().splitlines()[-1])
    assert error["error"] == "file_not_found"


def test_quick_selftest(capsys):
    code = main(["selftest", "--instances", "2", "--seed", "1", "--quick"])
    payload = json.loads(capsys.readouterr().out)
    assert code == (EXIT_OK if payload["passed"] else EXIT_CHECK_FAILED)
    assert payload["passed"]


def test_malformed_kernel_value_is_invalid_input(write_json, capsys):
    groupoid = write_json("pair.json", PAIR)
    kernel = write_json("bad.json", {"type": "explicit", "values": {"(a,a)": "abc"}})
    assert main(["norm", groupoid, kernel]) == EXIT_INVALID_INPUT
    error = json.loads(capsys.readouterr().err.strip().splitlines()[-1])
    assert error["error"] == "invalid_spec_file"


def test_zero_denominator_weight_is_invalid_input(write_json, capsys):
    zero = {"type": "pair", "classes": [[{"id": "a", "weight": "1/0"}, {"id": "b", "weight": "1/2"}]]}
    assert main(["validate", write_json("zero.json", zero)]) == EXIT_INVALID_INPUT
    error = json.loads(capsys.readouterr().err.strip().splitlines()[-1])
    assert error["error"] == "invalid_spec_file"
    assert error["details"]["errors"]
