from __future__ import annotations

import numpy as np
import pytest

from checks import random_instance, run_selftest
from checks.invariants import (
    check_a_delta,
    check_convolution,
    check_finite_suite,
    check_homomorphism,
    check_interval,
    check_kesten,
    check_monte_carlo,
    check_norms,
    check_structure,
)


@pytest.mark.parametrize("seed", range(8))
def test_random_instances_are_small_symmetric_fields(seed):
    instance = random_instance(np.random.default_rng(seed), max_arrows=64, index=seed)
    assert instance.groupoid.is_pmp, instance.name
    assert instance.groupoid.n_arrows <= 64, instance.name
    assert instance.kernel.is_probability_field, instance.name
    assert instance.kernel.is_symmetric, instance.name
    assert check_structure(instance) == []
    assert check_norms(instance) == []
    assert check_kesten(instance) == []


def test_selftest_without_constructions():
    report = run_selftest(instances=4, seed=3, constructions=False, monte_carlo=False)
    assert report.passed, report.to_dict()
    assert set(report.findings) == {"structure", "field", "convolution", "homomorphism", "norms", "kesten", "spectral"}


def test_construction_checks_on_small_parameters():
    assert check_finite_suite() == []
    assert check_a_delta(sizes=range(2, 8)) == []
    assert check_interval(8) == []


def test_algebraic_checks_on_a_random_instance(rng):
    instance = random_instance(rng, index=0)
    assert check_convolution(instance, rng) == []
    assert check_homomorphism(instance, rng) == []


def test_monte_carlo_cells_match_exact_laws():
    assert check_monte_carlo() == []
