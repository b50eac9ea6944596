from __future__ import annotations

import math
from fractions import Fraction

import pytest

from core.constructions.finite_groups import cyclic_table
from core.errors import DuplicateUnit, EmptyUnion, NotAGroup, NullSet, UnequalClassWeights
from core.groupoid import (
    UnitSet,
    build_explicit_groupoid,
    build_group_bundle,
    build_group_groupoid,
    build_pair_groupoid,
    check_group_table,
    compose_bisections,
    disjoint_union,
    full_bisections,
    inverse_bisection,
    invariant_sets,
    is_bisection,
    is_invariant,
    orbits,
    pair_arrow,
    product,
    restrict,
    unit_bisection,
    validate,
)

Z2_UNITS = [("x", 1)]
Z2_ARROWS = [("e", "x", "x", "e"), ("s", "x", "x", "s")]
Z2_COMPOSE = [("e", "e", "e"), ("e", "s", "s"), ("s", "e", "s"), ("s", "s", "e")]


def test_pair_groupoid_layout(s2):
    assert s2.n_units == 2
    assert s2.n_arrows == 4
    assert s2.is_pmp
    assert validate(s2) == []

    g = pair_arrow(s2, 0, 1)
    assert s2.arrow_label(g) == "(a,b)"
    assert int(s2.tgt[g]) == 0 and int(s2.src[g]) == 1
    assert s2.compose(g, pair_arrow(s2, 1, 0)) == int(s2.unit_arrow[0])


def test_pair_groupoid_rejects_unequal_class_weights():
    with pytest.raises(UnequalClassWeights):
        build_pair_groupoid([[("a", "1/3"), ("b", "2/3")]])


def test_duplicate_units_are_rejected():
    with pytest.raises(DuplicateUnit):
        build_pair_groupoid([[("a", "1/2")], [("a", "1/2")]])


def test_explicit_groupoid_matches_group_table():
    groupoid = build_explicit_groupoid(Z2_UNITS, Z2_ARROWS, Z2_COMPOSE)
    assert validate(groupoid) == []
    assert groupoid.is_pmp
    s = groupoid.arrow_index("s")
    assert groupoid.compose(s, s) == groupoid.arrow_index("e")


def test_validate_reports_missing_composition():
    groupoid = build_explicit_groupoid(Z2_UNITS, Z2_ARROWS, Z2_COMPOSE[:-1])
    axioms = {d.axiom for d in validate(groupoid)}
    assert "closure" in axioms


def test_validate_reports_measure_not_preserved():
    groupoid = build_explicit_groupoid(
        [("x", "1/3"), ("y", "2/3")],
        [("ex", "x", "x", "ex"), ("ey", "y", "y", "ey"), ("g", "x", "y", "h"), ("h", "y", "x", "g")],
        [
            ("ex", "ex", "ex"), ("ey", "ey", "ey"),
            ("g", "ex", "g"), ("ey", "g", "g"), ("h", "ey", "h"), ("ex", "h", "h"),
            ("g", "h", "ey"), ("h", "g", "ex"),
        ],
    )
    diagnostics = validate(groupoid)
    assert any(d.axiom == "pmp" for d in diagnostics)
    assert not groupoid.is_pmp


def test_check_group_table():
    assert check_group_table(cyclic_table(5)) == 0
    with pytest.raises(NotAGroup):
        check_group_table([[0, 0], [0, 1]])


def test_product_and_union_are_pmp(s2):
    z2 = build_group_groupoid(cyclic_table(2))
    prod = product(s2, z2)
    assert prod.n_units == 2
    assert prod.n_arrows == 8
    assert validate(prod) == []
    assert prod.is_pmp

    union = disjoint_union([(s2, "1/2"), (s2, "1/2")])
    assert union.unit_ids == ("0/a", "0/b", "1/a", "1/b")
    assert union.total_mass == 1
    assert validate(union) == []
    assert len(orbits(union)) == 2
    assert len(invariant_sets(union)) == 4


def test_empty_union_is_rejected():
    with pytest.raises(EmptyUnion):
        disjoint_union([])


def test_group_bundle_keeps_unit_ids():
    bundle = build_group_bundle([("p", "1/2", cyclic_table(2)), ("q", "1/2", cyclic_table(3))])
    assert bundle.unit_ids == ("p", "q")
    assert bundle.n_arrows == 5
    assert bundle.is_pmp
    assert validate(bundle) == []


def test_restriction_normalizes_measure(s2_s3):
    first = UnitSet.from_ids(s2_s3, ["0/a", "0/b"])
    assert is_invariant(s2_s3, first)
    assert not is_invariant(s2_s3, UnitSet.from_ids(s2_s3, ["0/a"]))

    restricted = restrict(s2_s3, first)
    assert restricted.n_arrows == 4
    assert restricted.weights == (Fraction(1, 2), Fraction(1, 2))
    assert restricted.is_pmp
    assert validate(restricted) == []


def test_restriction_to_null_set_fails(s2):
    with pytest.raises(NullSet):
        restrict(s2, UnitSet.of(s2, []))


def test_full_bisections_of_pair_groupoids(s2, s3):
    assert len(full_bisections(s2)) == 2
    assert len(full_bisections(s3)) == 6


def test_bisection_group_operations(s2):
    swap = [b for b in full_bisections(s2) if b != unit_bisection(s2)][0]
    assert compose_bisections(s2, swap, swap) == unit_bisection(s2)
    assert inverse_bisection(s2, swap) == swap
    assert not is_bisection(s2, [pair_arrow(s2, 0, 0), pair_arrow(s2, 0, 1)])


@pytest.mark.parametrize("n", [2, 3, 4])
def test_full_bisections_form_a_group(n):
    groupoid = build_pair_groupoid([[(f"u{i}", Fraction(1, n)) for i in range(n)]])
    group = full_bisections(groupoid)
    assert len(group) == math.factorial(n)
    members = set(group)
    identity = unit_bisection(groupoid)
    assert identity in members

    for first in group:
        assert compose_bisections(groupoid, identity, first) == first
        assert compose_bisections(groupoid, first, identity) == first
        inverse = inverse_bisection(groupoid, first)
        assert inverse in members
        assert compose_bisections(groupoid, first, inverse) == identity
        assert compose_bisections(groupoid, inverse, first) == identity

    products = {(f, s): compose_bisections(groupoid, f, s) for f in group for s in group}
    assert set(products.values()) <= members
    for f in group:
        for s in group:
            for t in group:
                assert products[products[f, s], t] == products[f, products[s, t]]
