from __future__ import annotations

import math

import numpy as np
import pytest

from critlab.measures import (
    EmpiricalMeasure,
    chordal_metric,
    convergence_series,
    exact_w1,
    measure_distance,
    mu_n,
    nu_nk,
    sliced_w1,
)
from critlab.polynomial import RootSet
from critlab.rootfinding import NonConvergenceError, RootFindResult
from critlab.sampling import RootDistribution, SampleStream, sample_prefix


def test_measure_basics() -> None:
    m = mu_n(RootSet.of([1, 2, 3, 4]))
    assert m.size == 4
    assert m.weight == 0.25
    assert m.total_mass == pytest.approx(1.0)
    with pytest.raises(ValueError):
        EmpiricalMeasure(np.array([], dtype=complex))


def test_sliced_identity_and_symmetry(rng: np.random.Generator) -> None:
    a = EmpiricalMeasure(rng.standard_normal(50) + 1j * rng.standard_normal(50))
    b = EmpiricalMeasure(rng.standard_normal(70) + 1j * rng.standard_normal(70))
    assert sliced_w1(a, a) == 0
    assert sliced_w1(a, b, seed=3) == pytest.approx(sliced_w1(b, a, seed=3))


def test_sliced_point_masses() -> None:
    # E|t cos(theta)| over uniform theta is 2|t|/pi
    t = 1.5
    d = sliced_w1(EmpiricalMeasure([0j]), EmpiricalMeasure([t + 0j]), n_directions=4096, seed=1)
    assert d == pytest.approx(2 * t / math.pi, rel=0.03)


def test_exact_w1_examples() -> None:
    assert exact_w1(EmpiricalMeasure([0j]), EmpiricalMeasure([1 + 0j])) == pytest.approx(1)
    assert exact_w1(EmpiricalMeasure([0, 1]), EmpiricalMeasure([1, 0])) == 0
    assert exact_w1(EmpiricalMeasure([0, 2]), EmpiricalMeasure([1, 3])) == pytest.approx(1)


def test_exact_w1_limits() -> None:
    with pytest.raises(ValueError):
        exact_w1(EmpiricalMeasure([0, 1]), EmpiricalMeasure([0j]))
    big = EmpiricalMeasure(np.arange(513, dtype=complex))
    with pytest.raises(ValueError):
        exact_w1(big, big)


def test_chordal_metric_examples() -> None:
    assert chordal_metric(0, complex(math.inf, 0)) == pytest.approx(2)
    assert chordal_metric(0, 1) == pytest.approx(math.sqrt(2))
    assert chordal_metric(1, -1) == pytest.approx(2)
    assert chordal_metric(complex(math.inf, 0), complex(math.inf, 0)) == 0


def test_chordal_w1_is_bounded(rng: np.random.Generator) -> None:
    a = EmpiricalMeasure(100 * rng.standard_normal(30))
    b = EmpiricalMeasure(rng.standard_normal(30) * 1e-3)
    assert 0 < exact_w1(a, b, ground="chordal") <= 2


def test_measure_distance_rejects_unknown_metric() -> None:
    m = EmpiricalMeasure([0j])
    with pytest.raises(ValueError):
        measure_distance("hausdorff", m, m)


def test_nu_nk_requires_converged_zeros() -> None:
    r = RootSet.of([0, 1, 2])
    stale = RootFindResult(np.array([0.4, 1.6], dtype=complex), np.ones(2), 200, False)
    with pytest.raises(NonConvergenceError):
        nu_nk(r, 1, stale)
    short = RootFindResult(np.array([0.4], dtype=complex), np.zeros(1), 3, True)
    with pytest.raises(ValueError):
        nu_nk(r, 1, short)


def test_convergence_series_rows(uniform_disk: RootDistribution) -> None:
    rows = convergence_series(SampleStream(uniform_disk, 0), 1, [16, 32, 64], reference_size=1024)
    assert [row.n for row in rows] == [16, 32, 64]
    assert all(row.certified and math.isfinite(row.distance) for row in rows)
    assert all(row.metric_name == "sliced_w1" and row.k == 1 for row in rows)


def test_convergence_series_k_zero_uses_roots(two_atom: RootDistribution) -> None:
    rows = convergence_series(SampleStream(two_atom, 2), 0, [64, 128], metric="exact_w1", reference_size=256)
    assert all(0 <= row.distance <= 2 for row in rows)


def test_distance_shrinks_with_n(uniform_disk: RootDistribution) -> None:
    small, large = [], []
    for seed in range(3):
        rows = convergence_series(SampleStream(uniform_disk, seed), 1, [16, 512], reference_size=4096)
        small.append(rows[0].distance)
        large.append(rows[1].distance)
    assert np.mean(large) < np.mean(small)


def test_two_atom_pathwise_convergence(two_atom: RootDistribution) -> None:
    ns = [4, 16, 64]
    distances = []
    for seed in range(9):
        rows = convergence_series(SampleStream(two_atom, seed), 1, ns, reference_size=4096)
        assert all(row.certified for row in rows)
        distances.append([row.distance for row in rows])
    medians = np.median(np.array(distances), axis=0)
    assert medians[0] > medians[1] > medians[2]


def test_series_rows_share_one_prefix(uniform_disk: RootDistribution) -> None:
    stream = SampleStream(uniform_disk, 4)
    np.testing.assert_array_equal(sample_prefix(stream, 64).roots[:16], sample_prefix(stream, 16).roots)


@pytest.mark.slow
def test_convergence_median_drops_threefold(uniform_disk: RootDistribution) -> None:
    distances = [
        [row.distance for row in convergence_series(SampleStream(uniform_disk, seed), 1, [64, 256, 1024])]
        for seed in range(20)
    ]
    medians = np.median(np.array(distances), axis=0)
    assert medians[0] > medians[1] > medians[2]
    assert medians[2] < medians[0] / 3


def test_convergence_series_validation(uniform_disk: RootDistribution) -> None:
    stream = SampleStream(uniform_disk, 0)
    with pytest.raises(ValueError):
        convergence_series(stream, 1, [])
    with pytest.raises(ValueError):
        convergence_series(stream, 1, [64, 32])
    with pytest.raises(ValueError):
        convergence_series(stream, 3, [3, 8])
