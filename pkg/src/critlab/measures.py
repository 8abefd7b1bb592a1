"""Empirical measures, distances between them, and convergence traces."""
from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.optimize import linear_sum_assignment
from scipy.stats import wasserstein_distance

from .polynomial import RootSet
from .rootfinding import AberthOptions, NonConvergenceError, RootFindResult, certify, derivative_zeros
from .sampling import SampleStream, derive_seed, philox_generator, sample_prefix

logger = logging.getLogger("critlab.measures")

METRICS = ("sliced_w1", "exact_w1", "chordal_w1")
EXACT_MAX_SIZE = 512
DEFAULT_REFERENCE_SIZE = 2**14


@dataclass(frozen=True, eq=False)
class EmpiricalMeasure:
    points: np.ndarray

    def __post_init__(self) -> None:
        points = np.array(self.points, dtype=np.complex128).reshape(-1)
        if points.size == 0:
            raise ValueError("EmpiricalMeasure needs at least one point.")
        if not np.all(np.isfinite(points)):
            raise ValueError("EmpiricalMeasure points must be finite.")
        points.setflags(write=False)
        object.__setattr__(self, "points", points)

    @property
    def size(self) -> int:
        return int(self.points.size)

    @property
    def weight(self) -> float:
        return 1.0 / self.size

    @property
    def total_mass(self) -> float:
        return self.weight * self.size


def mu_n(r: RootSet) -> EmpiricalMeasure:
    return EmpiricalMeasure(r.roots)


def nu_nk(r: RootSet, k: int, zeros: RootFindResult) -> EmpiricalMeasure:
    if not zeros.converged:
        raise NonConvergenceError(f"Zeros of P^({k}) for n={r.n} did not converge.")
    if zeros.zeros.size != r.n - k:
        raise ValueError(f"Expected {r.n - k} zeros, got {zeros.zeros.size}.")
    return EmpiricalMeasure(zeros.zeros)


def direction_angles(n_directions: int, seed: int) -> np.ndarray:
    if n_directions < 1:
        raise ValueError(f"n_directions must be >= 1, got {n_directions}.")
    return np.pi * philox_generator(derive_seed(seed, "directions")).random(n_directions)


def sliced_w1(m1: EmpiricalMeasure, m2: EmpiricalMeasure, n_directions: int = 256, seed: int = 0) -> float:
    """Average 1-D Wasserstein-1 distance of projections onto random directions."""
    total = 0.0
    for theta in direction_angles(n_directions, seed):
        rotation = np.exp(-1j * theta)
        total += wasserstein_distance((rotation * m1.points).real, (rotation * m2.points).real)
    return total / n_directions


def chordal_metric(z: complex, w: complex) -> float:
    """Chordal distance on the Riemann sphere; ``complex(inf)`` is the north pole."""
    z, w = complex(z), complex(w)
    z_inf, w_inf = math.isinf(abs(z)), math.isinf(abs(w))
    if z_inf and w_inf:
        return 0.0
    if z_inf:
        return 2.0 / math.sqrt(1.0 + abs(w) ** 2)
    if w_inf:
        return 2.0 / math.sqrt(1.0 + abs(z) ** 2)
    return 2.0 * abs(z - w) / math.sqrt((1.0 + abs(z) ** 2) * (1.0 + abs(w) ** 2))


def _cost_matrix(p: np.ndarray, q: np.ndarray, ground: str) -> np.ndarray:
    diff = np.abs(p[:, None] - q[None, :])
    if ground == "euclidean":
        return diff
    if ground == "chordal":
        scale = np.sqrt((1.0 + np.abs(p) ** 2)[:, None] * (1.0 + np.abs(q) ** 2)[None, :])
        return 2.0 * diff / scale
    raise ValueError(f"Unknown ground metric {ground!r}.")


def exact_w1(m1: EmpiricalMeasure, m2: EmpiricalMeasure, ground: str = "euclidean") -> float:
    """Optimal average matching cost between equal-size point sets."""
    if m1.size != m2.size:
        raise ValueError(f"exact_w1 needs equal sizes, got {m1.size} and {m2.size}.")
    if m1.size > EXACT_MAX_SIZE:
        raise ValueError(f"exact_w1 supports at most {EXACT_MAX_SIZE} points, got {m1.size}.")
    cost = _cost_matrix(m1.points, m2.points, ground)
    rows, cols = linear_sum_assignment(cost)
    return float(cost[rows, cols].mean())


def measure_distance(
    metric: str,
    measure: EmpiricalMeasure,
    reference: EmpiricalMeasure,
    n_directions: int = 256,
    seed: int = 0,
) -> float:
    """Distance under a named metric; exact metrics use the reference prefix of matching size."""
    if metric == "sliced_w1":
        return sliced_w1(measure, reference, n_directions, seed)
    if metric in ("exact_w1", "chordal_w1"):
        if reference.size < measure.size:
            raise ValueError("Reference sample is smaller than the measure.")
        matched = EmpiricalMeasure(reference.points[: measure.size])
        ground = "euclidean" if metric == "exact_w1" else "chordal"
        return exact_w1(measure, matched, ground)
    raise ValueError(f"Unknown metric {metric!r}; expected one of {list(METRICS)}.")


@dataclass(frozen=True)
class ConvergenceRow:
    n: int
    k: int
    seed: int
    metric_name: str
    distance: float
    wall_ms: float
    certified: bool = True


def reference_measure(stream: SampleStream, reference_size: int = DEFAULT_REFERENCE_SIZE) -> EmpiricalMeasure:
    """Large sample of the root law from a seed independent of ``stream``."""
    independent = SampleStream(stream.distribution, derive_seed(stream.seed, "reference"))
    return mu_n(sample_prefix(independent, reference_size))


def convergence_row(
    stream: SampleStream,
    k: int,
    n: int,
    reference: EmpiricalMeasure,
    metric: str = "sliced_w1",
    n_directions: int = 256,
    opts: AberthOptions | None = None,
) -> ConvergenceRow:
    started = time.perf_counter()
    roots = sample_prefix(stream, n)
    certified = True
    if k == 0:
        measure = mu_n(roots)
    else:
        result = derivative_zeros(roots, k, opts or AberthOptions(seed=stream.seed))
        certified = certify(roots, k, result)
        if not certified:
            logger.warning("Skipping n=%d k=%d seed=%d: root finding failed certification.", n, k, stream.seed)
            wall_ms = (time.perf_counter() - started) * 1000.0
            return ConvergenceRow(n, k, stream.seed, metric, math.nan, wall_ms, certified=False)
        measure = nu_nk(roots, k, result)
    distance = measure_distance(metric, measure, reference, n_directions, stream.seed)
    wall_ms = (time.perf_counter() - started) * 1000.0
    return ConvergenceRow(n, k, stream.seed, metric, distance, wall_ms, certified=True)


def convergence_series(
    stream: SampleStream,
    k: int,
    n_list: Sequence[int],
    metric: str = "sliced_w1",
    reference_size: int = DEFAULT_REFERENCE_SIZE,
    n_directions: int = 256,
    opts: AberthOptions | None = None,
) -> list[ConvergenceRow]:
    """Distances of nu_n^(k) (or mu_n when ``k == 0``) along one pathwise stream."""
    if not n_list:
        raise ValueError("n_list must not be empty.")
    if list(n_list) != sorted(set(n_list)):
        raise ValueError(f"n_list must be strictly ascending, got {list(n_list)}.")
    if k < 0 or min(n_list) <= k:
        raise ValueError(f"Need 0 <= k < min(n_list), got k={k}.")
    reference = reference_measure(stream, reference_size)
    return [convergence_row(stream, k, n, reference, metric, n_directions, opts) for n in n_list]
