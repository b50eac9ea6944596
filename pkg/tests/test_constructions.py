from __future__ import annotations

import math
from fractions import Fraction

import pytest

from core.constructions import (
    a_delta_matrix,
    finite_group_suite,
    free_group_ball,
    free_group_family,
    generator_field,
    interval_example,
    unbounded_union_example,
)
from core.constructions.finite_groups import dihedral_table, group_bundle_preset, group_preset_table
from core.constructions.free_group import kesten_value, radial_quotient, reduced_words, vertex_count
from core.errors import BadParameters, BallTooLarge
from core.groupoid import check_group_table, validate
from core.spectral import kesten_check


# --- A_δ y la unión no acotada ---

def test_a_delta_matrix_for_a_square_size():
    a = a_delta_matrix(4, "1/10")
    assert a.epsilon == Fraction(1, 40)
    assert a.column_sums() == [1, 1, 1, 1]
    assert a.exact_norm == pytest.approx(1.95022, abs=1e-5)
    assert a.exact_norm > a.lower_bound
    assert a.dense_norm() == pytest.approx(a.exact_norm, abs=1e-12)


@pytest.mark.parametrize("n", [2, 3, 7, 50])
@pytest.mark.parametrize("delta", ["2/5", "1/100"])
def test_a_delta_norm_exceeds_lower_bound(n, delta):
    a = a_delta_matrix(n, delta)
    assert a.exact_norm > a.lower_bound
    assert a.exact_norm < math.sqrt(n)


@pytest.mark.parametrize("n,delta", [(1, "1/10"), (4, "1/2"), (4, "0")])
def test_a_delta_rejects_bad_parameters(n, delta):
    with pytest.raises(BadParameters):
        a_delta_matrix(n, delta)


def test_unbounded_union_block_norms_grow():
    family = unbounded_union_example(4, "1/10")
    expected = [1.0, 1.3652, 1.6824, 1.9502]
    assert family.computed == pytest.approx(expected, abs=1e-3)
    assert family.strictly_increasing()
    for row in family.rows:
        assert row.gap == pytest.approx(0.0, abs=1e-9)
        assert row.computed > row.extra["lower_bound"]
    assert family.rows[-1].extra["truncated_norm"] == pytest.approx(family.rows[-1].computed)

    union, kernel = family.groupoid, family.kernel
    assert union.n_arrows == 1 + 4 + 9 + 16
    assert union.is_pmp
    assert validate(union) == []
    assert kernel.is_probability_field


def test_unbounded_union_passes_sqrt_n_minus_delta():
    family = unbounded_union_example(25, "1/10", build_union=False)
    assert family.groupoid is None
    assert family.rows[-1].computed > 4.9
    assert family.header()[:4] == ("n", "predicted", "computed", "gap")


# --- Intervalos ---

def test_interval_example_is_exact():
    family = interval_example(24)
    assert all(r.extra["exact"] for r in family.rows)
    assert family.rows[-1].computed == pytest.approx(5.0)
    assert family.rows[3].extra["xi_norm_sq"] == "4"
    assert family.rows[3].extra["p_xi_norm_sq"] == "16"
    assert family.metadata["source_fiber_sums_one"]
    assert not family.metadata["pmp"]


# --- Grupo libre ---

def test_free_group_ball_counts():
    assert vertex_count(2, 3) == 53
    assert len(reduced_words(2, 3)) == 53
    assert vertex_count(1, 5) == 11
    assert radial_quotient(2, 3).shape == (4, 4)


def test_free_group_star_ball():
    ball = free_group_ball(2, 1)
    assert ball.vertices == 5
    assert ball.norm == pytest.approx(0.5)


def test_free_group_explicit_and_radial_agree():
    ball = free_group_ball(2, 6)
    assert ball.method == "explicit"
    assert ball.explicit_norm == pytest.approx(ball.radial_norm, abs=1e-9)


def test_free_group_norms_approach_kesten_value():
    ball = free_group_ball(2, 12, "radial")
    assert ball.norm <= kesten_value(2)
    assert kesten_value(2) - ball.norm < 0.05

    family = free_group_family(2, 5)
    assert family.strictly_increasing()
    assert all(r.extra["below_oracle"] for r in family.rows)


def test_free_group_with_one_generator_is_amenable():
    ball = free_group_ball(1, 200, "radial")
    assert ball.norm >= 0.999
    assert ball.norm == pytest.approx(ball.oracle, abs=1e-9)


def test_explicit_ball_size_is_capped():
    with pytest.raises(BallTooLarge):
        free_group_ball(3, 12, "explicit")


# --- Grupos finitos ---

def test_group_presets():
    table, labels = group_preset_table("D_4")
    assert table.shape == (8, 8)
    assert labels[4] == "r0s"
    assert check_group_table(dihedral_table(5)) == 0
    with pytest.raises(BadParameters):
        group_preset_table("Q_8")


def test_finite_group_suite_passes_kesten():
    presets = finite_group_suite()
    assert len(presets) == 12
    for preset in presets:
        assert preset.kernel.is_probability_field, preset.name
        assert preset.kernel.is_symmetric, preset.name
        assert kesten_check(preset.groupoid, preset.kernel).passed, preset.name


def test_generator_field_needs_one_unit():
    bundle = group_bundle_preset()
    assert bundle.groupoid.n_units == 3
    with pytest.raises(BadParameters):
        generator_field(bundle.groupoid, [1])
