from __future__ import annotations

import math
from fractions import Fraction

import pytest

from core import spectral
from core.constructions import free_group_ball, interval_example
from core.errors import BadParameters, NonSymmetric, NotProbabilityPreserving, NullSet, NumericalError, TooShort
from core.groupoid import UnitSet
from core.kernels import identity_kernel, uniform_field
from core.spectral import (
    e_spectral_radius,
    extrapolate,
    kesten_check,
    kesten_check_operator,
    return_probability,
    spectral_measure,
    spectral_radius_from_measure,
)


def test_return_probability_routes_agree(z2, z2_lazy):
    everything = UnitSet.everything(z2)
    for n in range(0, 5):
        result = return_probability(z2, z2_lazy, everything, n)
        assert result.matrix_route == result.convolution_route
    assert return_probability(z2, z2_lazy, everything, 0).value == 1
    assert return_probability(z2, z2_lazy, everything, 3).value == Fraction(1, 2)


def test_return_probability_on_pair_groupoid(s3):
    kernel = uniform_field(s3, "rational")
    result = return_probability(s3, kernel, UnitSet.from_ids(s3, ["a"]), 2)
    assert result.value == Fraction(1, 3)
    assert result.discrepancy == 0


def test_e_spectral_radius_of_lazy_z2(z2, z2_lazy):
    report = e_spectral_radius(z2, z2_lazy, n_max=16)
    assert report.r_seq[0] == pytest.approx(math.sqrt(0.5))
    assert report.monotonicity_ok
    assert report.bounded_by_norm
    assert report.operator_norm == pytest.approx(1.0)
    assert report.rho_exact == pytest.approx(1.0)
    assert report.e_invariant
    assert report.kesten_pass
    assert report.to_rows()[0][0] == 1


def test_spectral_measure_is_a_probability(s3):
    atoms = spectral_measure(s3, uniform_field(s3))
    assert sum(a.mass for a in atoms) == pytest.approx(1.0)
    assert spectral_radius_from_measure(atoms) == pytest.approx(1.0)


def test_spectral_radius_rejects_drift(s2, s2_drift):
    with pytest.raises(NonSymmetric):
        e_spectral_radius(s2, s2_drift)


def test_null_set_is_rejected(s2, s2_uniform):
    with pytest.raises(NullSet):
        e_spectral_radius(s2, s2_uniform, UnitSet.of(s2, []))


def test_extrapolation():
    assert extrapolate([0.5, 0.5, 0.5]) == pytest.approx(0.5)
    # 0.2, 0.4, 0.5: diferencias 0.2 y 0.1, límite 0.5 + 0.1
    assert extrapolate([0.2, 0.4, 0.5]) == pytest.approx(0.6)
    limit = 0.8
    geometric = [limit * (1 - 0.5 ** n) for n in range(1, 20)]
    assert extrapolate(geometric) == pytest.approx(limit, abs=1e-3)
    with pytest.raises(TooShort):
        extrapolate([0.1, 0.2])


def test_extrapolation_of_half_return_probability():
    r_seq = [0.5 ** (1 / (2 * n)) for n in range(1, 51)]
    assert 0.99 <= extrapolate(r_seq) <= 1.0001
    # n log r_n es constante, así que los incrementos logarítmicos dan el límite exacto
    assert extrapolate(r_seq, method="log-increments") == pytest.approx(1.0)
    with pytest.raises(BadParameters):
        extrapolate(r_seq, method="richardson")


def test_return_probability_routes_must_agree(s3, monkeypatch):
    monkeypatch.setattr(spectral, "convolution_power", lambda kernel, n: identity_kernel(kernel.groupoid, kernel.precision))
    everything = UnitSet.everything(s3)
    for precision in ("rational", "float"):
        with pytest.raises(NumericalError) as info:
            return_probability(s3, uniform_field(s3, precision), everything, 1)
        assert info.value.details["n"] == 1


def test_kesten_on_union_checks_every_invariant_set(s2_s3):
    report = kesten_check(s2_s3, uniform_field(s2_s3))
    assert report.passed
    assert report.enumerated
    assert report.invariant_sets == 4
    assert len(report.entries) == 3
    assert {e.mass for e in report.entries} == {Fraction(1, 2), Fraction(1)}
    assert report.to_dict()["checked_sets"] == 3


def test_kesten_needs_probability_preserving_groupoid():
    family = interval_example(3)
    with pytest.raises(NotProbabilityPreserving):
        kesten_check(family.groupoid, uniform_field(family.groupoid))


def test_kesten_fails_on_truncated_free_group():
    ball = free_group_ball(2, 4)
    report = kesten_check_operator(ball.operator(), "F2 ball R=4")
    assert not report.passed
    assert report.entries[0].norm < math.sqrt(3) / 2
