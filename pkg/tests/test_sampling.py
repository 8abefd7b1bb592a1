from __future__ import annotations

import math

import numpy as np
import pytest

from critlab.sampling import (
    RootDistribution,
    SampleStream,
    derive_seed,
    has_finite_support,
    parse_distribution,
    sample_prefix,
    support_radius,
    trial_stream,
)


def test_prefix_property(uniform_disk: RootDistribution) -> None:
    stream = SampleStream(uniform_disk, 7)
    short = sample_prefix(stream, 300).roots
    long = sample_prefix(stream, 1000).roots
    np.testing.assert_array_equal(short, long[:300])


def test_same_seed_is_identical(uniform_disk: RootDistribution) -> None:
    a = sample_prefix(SampleStream(uniform_disk, 3), 50).roots
    b = sample_prefix(SampleStream(uniform_disk, 3), 50).roots
    np.testing.assert_array_equal(a, b)


def test_different_seeds_differ(uniform_disk: RootDistribution) -> None:
    a = sample_prefix(SampleStream(uniform_disk, 3), 50).roots
    b = sample_prefix(SampleStream(uniform_disk, 4), 50).roots
    assert not np.array_equal(a, b)


def test_uniform_circle_on_circle() -> None:
    roots = sample_prefix(SampleStream(RootDistribution.uniform_circle(1.0), 1), 1000).roots
    assert np.max(np.abs(np.abs(roots) - 1.0)) < 1e-14


def test_uniform_disk_inside_and_radial_law(uniform_disk: RootDistribution) -> None:
    roots = sample_prefix(SampleStream(uniform_disk, 11), 20000).roots
    assert np.all(np.abs(roots) <= 1.0)
    # P(|Z| <= 1/2) = 1/4
    assert abs(np.mean(np.abs(roots) <= 0.5) - 0.25) < 0.015


def test_point_mass_returns_the_atom() -> None:
    dist = RootDistribution.discrete([2 + 1j])
    roots = sample_prefix(SampleStream(dist, 0), 10).roots
    assert np.all(roots == 2 + 1j)


def test_two_atom_frequencies(two_atom: RootDistribution) -> None:
    roots = sample_prefix(SampleStream(two_atom, 5), 10000).roots
    assert set(np.unique(roots)) <= {1 + 0j, -1 + 0j}
    assert abs(np.mean(roots == 1) - 0.5) < 0.03


def test_gaussian_moments() -> None:
    roots = sample_prefix(SampleStream(RootDistribution.complex_gaussian(2.0), 9), 20000).roots
    assert abs(roots.mean()) < 0.05
    assert abs(np.mean(np.abs(roots) ** 2) - 4.0) < 0.2


def test_mixture_draws_from_components() -> None:
    dist = RootDistribution.mixture(
        [RootDistribution.discrete([5]), RootDistribution.uniform_circle(1.0)], [0.25, 0.75]
    )
    roots = sample_prefix(SampleStream(dist, 2), 4000).roots
    at_five = roots == 5
    assert abs(at_five.mean() - 0.25) < 0.03
    assert np.max(np.abs(np.abs(roots[~at_five]) - 1.0)) < 1e-14


def test_sample_prefix_rejects_zero(uniform_disk: RootDistribution) -> None:
    with pytest.raises(ValueError):
        sample_prefix(SampleStream(uniform_disk, 0), 0)


def test_invalid_weights_rejected() -> None:
    with pytest.raises(ValueError):
        RootDistribution.discrete([1, -1], [0.7, 0.7])
    with pytest.raises(ValueError):
        RootDistribution.discrete([1, 1])


def test_parse_distribution_forms() -> None:
    dist = parse_distribution({"kind": "discrete", "atoms": [1, "1+2j", [0, -1]], "weights": [0.5, 0.25, 0.25]})
    assert dist.atoms == (1 + 0j, 1 + 2j, -1j)
    assert parse_distribution({"kind": "uniform-disk"}).radius == 1.0
    with pytest.raises(ValueError):
        parse_distribution({"kind": "cauchy"})


def test_support_helpers(two_atom: RootDistribution) -> None:
    assert has_finite_support(two_atom)
    assert not has_finite_support(RootDistribution.uniform_disk(2.0))
    assert support_radius(RootDistribution.uniform_disk(2.0)) == 2.0
    assert math.isinf(support_radius(RootDistribution.complex_gaussian()))


def test_derive_seed_is_stable_and_tag_sensitive() -> None:
    assert derive_seed(1, "trial", 3) == derive_seed(1, "trial", 3)
    assert derive_seed(1, "trial", 3) != derive_seed(1, "trial", 4)
    assert derive_seed(1, "a") != derive_seed(1, "b")


def test_trial_streams_are_independent_of_order(two_atom: RootDistribution) -> None:
    forward = [sample_prefix(trial_stream(two_atom, 8, t), 16).roots for t in range(5)]
    backward = [sample_prefix(trial_stream(two_atom, 8, t), 16).roots for t in reversed(range(5))]
    for a, b in zip(forward, reversed(backward)):
        np.testing.assert_array_equal(a, b)
