from __future__ import annotations

import math
from fractions import Fraction

import pytest

from core.errors import BadParameters, GroupoidError, GroupoidMismatch, NotAField, NotFull
from core.groupoid import Bisection, UnitSet, full_bisections, make_bisection, pair_arrow, restrict
from core.kernels import (
    BisectionMeasure,
    Kernel,
    convolution_power,
    convolve,
    field_from_bisections,
    field_from_matrix,
    i_norm,
    identity_kernel,
    involution,
    kernel_l2_norm,
    kernel_l2_norm_squared,
    matrix_orientation,
    restrict_kernel,
    uniform_field,
    union_kernel,
)


def test_uniform_field_on_pair_groupoid(s2_uniform):
    assert all(v == Fraction(1, 2) for v in s2_uniform.values.values())
    assert s2_uniform.is_probability_field
    assert s2_uniform.is_symmetric
    assert i_norm(s2_uniform) == 1


def test_l2_norm_uses_target_measure(s2_uniform):
    assert kernel_l2_norm_squared(s2_uniform) == Fraction(1, 2)
    assert kernel_l2_norm(s2_uniform) == pytest.approx(math.sqrt(0.5))


def test_convolution_identity_and_powers(s2_uniform):
    assert convolve(s2_uniform, s2_uniform).equals(s2_uniform)
    assert convolution_power(s2_uniform, 0).equals(identity_kernel(s2_uniform.groupoid, "rational"))
    assert convolution_power(s2_uniform, 5).equals(s2_uniform)


def test_convolution_is_associative(s2_uniform, s2_drift):
    left = convolve(convolve(s2_drift, s2_uniform), s2_drift)
    right = convolve(s2_drift, convolve(s2_uniform, s2_drift))
    assert left.equals(right)


def test_involution_reverses_products(s2, s2_drift, s2_uniform):
    assert not s2_drift.is_symmetric
    star = involution(s2_drift)
    assert star(pair_arrow(s2, 0, 1)) == 1
    assert star(pair_arrow(s2, 1, 0)) == 0
    assert involution(star).equals(s2_drift)
    assert involution(convolve(s2_drift, s2_uniform)).equals(convolve(involution(s2_uniform), star))


def test_i_norm_sees_source_fibers(s2_drift):
    # toda la masa sale de la unidad a
    assert i_norm(s2_drift) == 2


def test_matrix_orientation_auto_transposes_column_stochastic(s2):
    matrix = [["1/2", 1], ["1/2", 0]]
    assert matrix_orientation(matrix) == "columns"
    kernel = field_from_matrix(s2, matrix, "auto", "rational")
    assert kernel(pair_arrow(s2, 0, 0)) == Fraction(1, 2)
    assert kernel(pair_arrow(s2, 0, 1)) == Fraction(1, 2)
    assert kernel(pair_arrow(s2, 1, 0)) == 1
    assert kernel(pair_arrow(s2, 1, 1)) == 0


def test_matrix_that_is_not_stochastic_is_rejected(s2):
    with pytest.raises(NotAField):
        field_from_matrix(s2, [[1, 1], [1, 1]], "auto", "rational")
    with pytest.raises(BadParameters):
        field_from_matrix(s2, [[1]], "auto", "rational")


def test_field_from_uniform_bisections(s2, s2_uniform):
    measure = BisectionMeasure.uniform(full_bisections(s2))
    assert measure.is_symmetric(s2)
    assert field_from_bisections(s2, measure, "rational").equals(s2_uniform)


def test_partial_bisection_is_rejected(s2):
    partial = make_bisection(s2, [pair_arrow(s2, 0, 0)])
    with pytest.raises(NotFull):
        field_from_bisections(s2, BisectionMeasure.of([(partial, 1)]))


def test_forged_bisection_is_rejected(s2):
    # dos flechas con el mismo destino a
    forged = Bisection((pair_arrow(s2, 0, 0), pair_arrow(s2, 0, 1)), full=True)
    with pytest.raises(GroupoidError) as info:
        field_from_bisections(s2, BisectionMeasure.of([(forged, 1)]))
    assert info.type is GroupoidError

    repeated = Bisection((pair_arrow(s2, 0, 0), pair_arrow(s2, 0, 0)), full=True)
    with pytest.raises(GroupoidError):
        field_from_bisections(s2, BisectionMeasure.of([(repeated, 1)]))


def test_bisection_weights_must_sum_to_one(s2):
    with pytest.raises(BadParameters):
        BisectionMeasure.of([(b, "1/3") for b in full_bisections(s2)])


def test_kernel_from_labels_and_field_violation(s2):
    kernel = Kernel.from_labels(s2, {"(a,a)": "1/2", "(a,b)": "1/2", "(b,b)": "1/4"}, "rational")
    violation = kernel.field_violation()
    assert violation["unit"] == "b"
    with pytest.raises(NotAField):
        kernel.require_field()


def test_union_and_restriction_of_kernels(s2_s3):
    parts = restrict(s2_s3, UnitSet.from_ids(s2_s3, ["0/a", "0/b"]))
    uniform = uniform_field(s2_s3, "rational")
    local = restrict_kernel(uniform, UnitSet.from_ids(s2_s3, ["0/a", "0/b"]), parts)
    assert local.is_probability_field
    assert len(local.values) == 4

    with pytest.raises(GroupoidMismatch):
        union_kernel(s2_s3, [local])
