from __future__ import annotations

from fractions import Fraction

import pytest

from core.constructions.finite_groups import cyclic_table
from core.errors import BadParameters, NotAField
from core.groupoid import UnitSet, build_group_bundle
from core.kernels import Kernel, uniform_field
from core.walks import (
    WalkConfig,
    block_rng,
    empirical_distribution,
    estimate_return,
    exact_distribution,
    sample_walk,
    total_variation,
)


def test_zero_steps_always_return(z2, z2_lazy):
    estimate = estimate_return(z2, z2_lazy, UnitSet.everything(z2), steps=0, samples=500, seed=1)
    assert estimate.p_hat == 1.0
    assert estimate.exact == 1.0
    assert estimate.z_score == 0.0


def test_estimate_matches_exact_return(s3):
    kernel = uniform_field(s3, "rational")
    estimate = estimate_return(s3, kernel, UnitSet.everything(s3), steps=3, samples=20_000, seed=11)
    assert estimate.exact == pytest.approx(1 / 3)
    assert estimate.within(4.0)
    assert estimate.to_row()[:2] == (3, 20_000)


def test_results_do_not_depend_on_threads(z2, z2_lazy):
    everything = UnitSet.everything(z2)
    single = estimate_return(z2, z2_lazy, everything, steps=5, samples=20_000, seed=3, threads=1)
    pooled = estimate_return(z2, z2_lazy, everything, steps=5, samples=20_000, seed=3, threads=2)
    assert single.p_hat == pooled.p_hat


def test_block_streams_are_reproducible():
    first = block_rng(42, 3).random(4)
    again = block_rng(42, 3).random(4)
    other = block_rng(42, 4).random(4)
    assert (first == again).all()
    assert not (first == other).all()


def test_single_walk_keeps_its_target(s3):
    kernel = uniform_field(s3, "rational")
    final = sample_walk(s3, kernel, 0, steps=10, seed=5)
    assert 0 <= final < s3.n_arrows
    assert int(s3.tgt[final]) == 0


def test_empirical_distribution_sums_to_one(s2, s2_uniform):
    config = WalkConfig(s2, s2_uniform, UnitSet.everything(s2), steps=2, samples=1000, seed=9)
    distribution = empirical_distribution(config)
    assert sum(distribution.values()) == pytest.approx(1.0)
    assert set(distribution) <= set(range(s2.n_arrows))


def test_empirical_distribution_matches_convolution_power(s3, s2, s2_drift):
    # campo simétrico y campo con deriva: la orientación de los pasos importa en el segundo
    for groupoid, kernel, steps in ((s3, uniform_field(s3, "rational"), 2), (s2, s2_drift, 3)):
        config = WalkConfig(groupoid, kernel, UnitSet.everything(groupoid), steps=steps, samples=20_000, seed=17)
        exact = exact_distribution(config)
        assert sum(exact.values()) == pytest.approx(1.0)
        assert total_variation(empirical_distribution(config), exact) < 0.03


def test_start_weights_with_huge_denominators():
    p, q = 2 ** 61 - 1, 2 ** 31 - 1
    weights = [Fraction(1, p), Fraction(1, q), 1 - Fraction(1, p) - Fraction(1, q)]
    bundle = build_group_bundle([(f"x{i}", w, cyclic_table(2)) for i, w in enumerate(weights)])
    kernel = uniform_field(bundle, "rational")
    estimate = estimate_return(bundle, kernel, UnitSet.everything(bundle), steps=1, samples=4000, seed=2)
    assert estimate.exact == pytest.approx(0.5)
    assert estimate.within(4.0)


def test_walk_config_validation(s2, s2_uniform):
    everything = UnitSet.everything(s2)
    with pytest.raises(BadParameters):
        WalkConfig(s2, s2_uniform, everything, steps=1, samples=0, seed=0)
    with pytest.raises(BadParameters):
        WalkConfig(s2, s2_uniform, everything, steps=-1, samples=10, seed=0)
    with pytest.raises(NotAField):
        WalkConfig(s2, Kernel(s2, {0: 1}), everything, steps=1, samples=10, seed=0)
