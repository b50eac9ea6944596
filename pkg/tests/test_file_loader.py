from __future__ import annotations

from fractions import Fraction

import pytest

from core.errors import InvalidSpecFile
from core.file_loader import describe_groupoid, load_groupoid, load_kernel, read_json

PAIR = {"type": "pair", "classes": [[{"id": "a", "weight": "1/2"}, {"id": "b", "weight": "1/2"}]]}

Z2_EXPLICIT = {
    "units": [{"id": "x", "weight": 1}],
    "arrows": [{"id": "e", "src": "x", "tgt": "x", "inv": "e"}, {"id": "s", "src": "x", "tgt": "x", "inv": "s"}],
    "compose": [["e", "e", "e"], ["e", "s", "s"], ["s", "e", "s"], ["s", "s", "e"]],
}


def test_explicit_groupoid_without_type(write_json):
    groupoid = load_groupoid(write_json("z2.json", Z2_EXPLICIT))
    assert groupoid.n_arrows == 2
    assert groupoid.is_pmp


def test_explicit_groupoid_with_broken_axioms(write_json):
    broken = dict(Z2_EXPLICIT, compose=Z2_EXPLICIT["compose"][:-1])
    path = write_json("broken.json", broken)
    with pytest.raises(InvalidSpecFile) as info:
        load_groupoid(path)
    assert any(d["axiom"] == "closure" for d in info.value.details["diagnostics"])
    # sin comprobación se carga igualmente
    assert load_groupoid(path, check=False).n_arrows == 2


def test_pair_groupoid_and_kernels(write_json):
    groupoid = load_groupoid(write_json("pair.json", PAIR))
    assert groupoid.unit_ids == ("a", "b")

    uniform = load_kernel(write_json("uniform.json", {"type": "uniform"}), groupoid, "rational")
    matrix = load_kernel(write_json("matrix.json", {"type": "matrix", "data": [["1/2", "1/2"], ["1/2", "1/2"]]}), groupoid, "rational")
    bisections = load_kernel(
        write_json(
            "bisections.json",
            {
                "type": "bisections",
                "items": [
                    {"arrows": ["(a,a)", "(b,b)"], "weight": "1/2"},
                    {"arrows": ["(a,b)", "(b,a)"], "weight": "1/2"},
                ],
            },
        ),
        groupoid,
        "rational",
    )
    explicit = load_kernel(
        write_json("explicit.json", {"type": "explicit", "values": {"(a,a)": "1/2", "(a,b)": "1/2", "(b,a)": "1/2", "(b,b)": "1/2"}}),
        groupoid,
        "rational",
    )
    assert matrix.equals(uniform)
    assert bisections.equals(uniform)
    assert explicit.equals(uniform)
    assert uniform(0) == Fraction(1, 2)


def test_group_preset_with_generators(write_json):
    groupoid = load_groupoid(write_json("d3.json", {"type": "group", "preset": "D_3", "unit": "u"}))
    assert groupoid.n_arrows == 6
    assert groupoid.arrow_label(3) == "r0s"
    kernel = load_kernel(write_json("gens.json", {"type": "generators", "generators": ["r1", "r0s"]}), groupoid, "rational")
    assert kernel.is_probability_field
    assert kernel.is_symmetric
    assert len(kernel.values) == 4


def test_composite_specs(write_json):
    spec = {
        "type": "restrict",
        "units": ["0/a", "0/b"],
        "groupoid": {
            "type": "union",
            "parts": [
                {"groupoid": PAIR, "scale": "1/2"},
                {"groupoid": {"type": "product", "parts": [PAIR, {"type": "group", "table": [[0, 1], [1, 0]]}]}, "scale": "1/2"},
            ],
        },
    }
    groupoid = load_groupoid(write_json("composite.json", spec))
    assert groupoid.n_units == 2
    assert groupoid.n_arrows == 4
    assert groupoid.is_pmp


def test_bundle_spec(write_json):
    spec = {
        "type": "bundle",
        "units": [
            {"unit": "p", "weight": "1/2", "preset": "Z_2"},
            {"unit": "q", "weight": "1/2", "table": [[0, 1, 2], [1, 2, 0], [2, 0, 1]]},
        ],
    }
    groupoid = load_groupoid(write_json("bundle.json", spec))
    assert groupoid.unit_ids == ("p", "q")
    assert describe_groupoid(groupoid)["arrows"] == 5


@pytest.mark.parametrize(
    "payload",
    [
        {"type": "group", "preset": "Z_2", "table": [[0]]},
        {"type": "group"},
        {"type": "group", "preset": "free_ball"},
        {"type": "pair", "classes": []},
        {"type": "torus"},
        dict(PAIR, extra=1),
        {"type": "pair", "classes": [[{"id": "a", "weight": "1/0"}]]},
        {"type": "group", "preset": "Z_2", "weight": "half"},
    ],
)
def test_schema_violations(write_json, payload):
    with pytest.raises(InvalidSpecFile) as info:
        load_groupoid(write_json("bad.json", payload))
    assert info.value.details["errors"]


def test_construction_errors_become_spec_errors(write_json):
    unequal = {"type": "pair", "classes": [[{"id": "a", "weight": "1/3"}, {"id": "b", "weight": "2/3"}]]}
    with pytest.raises(InvalidSpecFile) as info:
        load_groupoid(write_json("unequal.json", unequal))
    assert info.value.details["cause"] == "unequal_class_weights"


def test_kernel_schema_rejects_unknown_type(write_json):
    groupoid = load_groupoid(write_json("pair.json", PAIR))
    with pytest.raises(InvalidSpecFile):
        load_kernel(write_json("k.json", {"type": "uniform", "seed": 3}), groupoid)


def test_invalid_json_and_missing_file(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text("{not json", encoding="utf-8")
    with pytest.raises(InvalidSpecFile):
        read_json(bad)
    with pytest.raises(FileNotFoundError):
        read_json(tmp_path / "missing.json")


def test_kernel_values_are_checked(write_json):
    groupoid = load_groupoid(write_json("pair.json", PAIR))
    with pytest.raises(InvalidSpecFile) as info:
        load_kernel(write_json("abc.json", {"type": "explicit", "values": {"(a,a)": "abc"}}), groupoid)
    assert info.value.details["errors"]

    complex_values = {"type": "explicit", "values": {"(a,b)": "1+2j", "(b,a)": "1-2j"}}
    path = write_json("complex.json", complex_values)
    assert load_kernel(path, groupoid, "float")(1) == 1 + 2j
    with pytest.raises(InvalidSpecFile) as info:
        load_kernel(path, groupoid, "rational")
    assert info.value.details["cause"] == "invalid_number"
