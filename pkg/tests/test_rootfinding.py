from __future__ import annotations

import math
from typing import Callable

import mpmath
import numpy as np
import pytest
from scipy.optimize import linear_sum_assignment
from scipy.spatial import ConvexHull

from critlab.polynomial import RootSet
from critlab.rootfinding import (
    AberthOptions,
    ContourTooCloseError,
    certify,
    count_zeros_argument_principle,
    derivative_zeros,
    differentiate_coefficients,
    expand_coefficients,
    oracle_derivative_zeros,
)


def _matched_error(a: np.ndarray, b: np.ndarray) -> float:
    cost = np.abs(a[:, None] - b[None, :])
    rows, cols = linear_sum_assignment(cost)
    return float(cost[rows, cols].max())


def test_small_examples() -> None:
    result = derivative_zeros(RootSet.of([1, -1]), 1)
    assert result.converged
    assert abs(result.zeros[0]) < 1e-12

    zeros = np.sort_complex(derivative_zeros(RootSet.of([0, 1, 2]), 1).zeros)
    np.testing.assert_allclose(zeros, [1 - 1 / math.sqrt(3), 1 + 1 / math.sqrt(3)], atol=1e-12)

    second = derivative_zeros(RootSet.of([0, 1, 2]), 2)
    assert second.zeros.size == 1
    assert abs(second.zeros[0] - 1) < 1e-12


def test_rejects_bad_order() -> None:
    with pytest.raises(ValueError):
        derivative_zeros(RootSet.of([1, 2]), 2)
    with pytest.raises(ValueError):
        derivative_zeros(RootSet.of([1, 2]), 0)


def test_multiple_roots_become_fixed_zeros() -> None:
    # ((z^2 - 1)^5)'' = 10 (z^2 - 1)^3 (9 z^2 - 1)
    r = RootSet.of([1] * 5 + [-1] * 5)
    result = derivative_zeros(r, 2)
    assert result.converged
    assert result.zeros.size == 8
    expected = np.array([1] * 3 + [-1] * 3 + [1 / 3, -1 / 3], dtype=complex)
    assert _matched_error(result.zeros, expected) < 1e-10


def test_point_mass_needs_no_iteration() -> None:
    result = derivative_zeros(RootSet.of([2j] * 6), 2)
    assert result.iterations == 0
    np.testing.assert_array_equal(result.zeros, np.full(4, 2j))


def test_matches_oracle(rng: np.random.Generator) -> None:
    for _ in range(50):
        n = int(rng.integers(5, 41))
        k = int(rng.integers(1, 4))
        r = RootSet((rng.standard_normal(n) + 1j * rng.standard_normal(n)) / math.sqrt(2.0))
        result = derivative_zeros(r, k)
        assert result.converged
        oracle = oracle_derivative_zeros(r, k)
        assert _matched_error(result.zeros, oracle) < 1e-8


def test_gauss_lucas_containment(random_roots: Callable[[int], RootSet]) -> None:
    r = random_roots(60)
    zeros = derivative_zeros(r, 2).zeros
    hull = ConvexHull(np.column_stack([r.roots.real, r.roots.imag]))
    points = np.column_stack([zeros.real, zeros.imag])
    slack = points @ hull.equations[:, :2].T + hull.equations[:, 2]
    assert np.all(slack <= 1e-8 * r.diameter())


def test_sum_of_zeros_matches_coefficients(random_roots: Callable[[int], RootSet]) -> None:
    r = random_roots(25)
    k = 3
    coeffs = differentiate_coefficients(expand_coefficients(r), k)
    expected = complex(-coeffs[-2] / coeffs[-1])
    total = derivative_zeros(r, k).zeros.sum()
    assert abs(total - expected) < 1e-9 * max(1.0, abs(expected))


def test_expand_coefficients_examples() -> None:
    assert [complex(c) for c in expand_coefficients(RootSet.of([1, -1]))] == [-1, 0, 1]
    assert [complex(c) for c in expand_coefficients(RootSet.of([0, 1, 2]))] == [0, 2, -3, 1]


def test_expand_coefficients_evaluates_product(random_roots: Callable[[int], RootSet]) -> None:
    r = random_roots(20)
    coeffs = expand_coefficients(r)
    with mpmath.workprec(512):
        for z in (0.3 + 0.2j, -1.1j, 2.0):
            zm = mpmath.mpc(z.real, z.imag) if isinstance(z, complex) else mpmath.mpc(z)
            horner = mpmath.polyval(list(reversed(coeffs)), zm)
            product = mpmath.fprod(zm - mpmath.mpc(w.real, w.imag) for w in r.roots)
            assert abs(horner - product) <= mpmath.mpf(10) ** -100 * abs(product)


def test_expand_coefficients_degree_cap() -> None:
    with pytest.raises(ValueError):
        expand_coefficients(RootSet(np.arange(129, dtype=complex)))


def test_argument_principle_examples() -> None:
    assert count_zeros_argument_principle(RootSet.of([1, -1]), 1, 0, 0.5) == 1
    assert count_zeros_argument_principle(RootSet.of([0, 1, 2]), 1, 1, 0.9) == 2
    assert count_zeros_argument_principle(RootSet.of([0, 1, 2]), 1, 5, 0.5) == 0


def test_argument_principle_contour_guard() -> None:
    with pytest.raises(ContourTooCloseError):
        count_zeros_argument_principle(RootSet.of([1, -1]), 1, 0, 1.0)
    with pytest.raises(ValueError):
        count_zeros_argument_principle(RootSet.of([1, -1]), 1, 0, 0.5, m_samples=32)


def test_certify_converged_result(random_roots: Callable[[int], RootSet]) -> None:
    r = random_roots(30)
    result = derivative_zeros(r, 1)
    assert certify(r, 1, result)


def test_unconverged_result_is_reported() -> None:
    r = RootSet(np.exp(2j * np.pi * np.arange(30) / 30) * np.linspace(1, 2, 30))
    result = derivative_zeros(r, 1, AberthOptions(max_sweeps=1, restarts=1))
    assert not result.converged
    assert not certify(r, 1, result)


def test_restarts_are_deterministic(random_roots: Callable[[int], RootSet]) -> None:
    r = random_roots(40)
    a = derivative_zeros(r, 2, AberthOptions(seed=4))
    b = derivative_zeros(r, 2, AberthOptions(seed=4))
    np.testing.assert_array_equal(a.zeros, b.zeros)


def test_options_validation() -> None:
    with pytest.raises(ValueError):
        AberthOptions(max_sweeps=0)
    with pytest.raises(ValueError):
        AberthOptions(tol_root=0)
    with pytest.raises(ValueError):
        AberthOptions(restarts=0)
