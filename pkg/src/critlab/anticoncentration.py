"""Decoupling, small-ball estimation and their exact cross-checks.

Subsets ``alpha`` of the partition blocks are 0-based: ``alpha`` is a set of
block indices in ``range(k)``, and block ``j`` is taken from ``Y`` when
``j in alpha`` and from the independent copy ``Y'`` otherwise.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from itertools import combinations
from typing import Callable, Iterable, Sequence

import numpy as np
from scipy.stats import binom, binomtest

from .polynomial import POLE_TOLERANCE, PoleError, RootSet, elementary_symmetric, evaluate_sn_batch
from .sampling import (
    RootDistribution,
    SampleStream,
    derive_seed,
    philox_generator,
    sample_prefix,
    sample_trials,
    typical_scale,
)
from .utils import chunk_ranges

logger = logging.getLogger("critlab.anticoncentration")

MIN_TRIALS = 10_000
TRIAL_CHUNK = 2048
LINEAR_BLOCK = 4096
LINEAR_STEPS = ("rademacher", "gaussian")
MAX_ENUMERATION = 2**20
RANK_THRESHOLD = 1e-8
PIGEONHOLE_BOUND = 2.0


class HypothesisNotSatisfied(ValueError):
    """Raised when a mixed evaluation exceeds modulus 1 in a pigeonhole request."""


@dataclass(frozen=True, eq=False)
class Partition:
    blocks: tuple[np.ndarray, ...]

    def __post_init__(self) -> None:
        blocks = tuple(np.asarray(b, dtype=np.int64).reshape(-1) for b in self.blocks)
        if not blocks:
            raise ValueError("Partition needs at least one block.")
        merged = np.sort(np.concatenate(blocks))
        if not np.array_equal(merged, np.arange(merged.size)):
            raise ValueError("Partition blocks must be disjoint and cover 0..n-1.")
        n, k = merged.size, len(blocks)
        sizes = [b.size for b in blocks]
        if min(sizes) < n // k or max(sizes) > -(-n // k):
            raise ValueError(f"Unbalanced partition sizes {sizes} for n={n}, k={k}.")
        object.__setattr__(self, "blocks", blocks)

    @property
    def n(self) -> int:
        return int(sum(b.size for b in self.blocks))

    @property
    def k(self) -> int:
        return len(self.blocks)

    @property
    def sizes(self) -> tuple[int, ...]:
        return tuple(int(b.size) for b in self.blocks)


def make_partition(n: int, k: int) -> Partition:
    """Contiguous blocks; the first ``n % k`` blocks get one extra index."""
    if not 1 <= k <= n:
        raise ValueError(f"Need 1 <= k <= n, got k={k}, n={n}.")
    base, extra = divmod(n, k)
    bounds = np.cumsum([0] + [base + (1 if j < extra else 0) for j in range(k)])
    return Partition(tuple(np.arange(bounds[j], bounds[j + 1]) for j in range(k)))


@dataclass(frozen=True, eq=False)
class DecoupledInstance:
    Y: RootSet
    Y_prime: RootSet
    partition: Partition
    z: np.ndarray

    def __post_init__(self) -> None:
        if self.Y.n != self.Y_prime.n:
            raise ValueError("Y and Y' must have the same length.")
        if self.partition.n != self.Y.n:
            raise ValueError("Partition size does not match the number of roots.")
        z = np.array(self.z, dtype=np.complex128).reshape(-1)
        if z.size == 0:
            raise ValueError("DecoupledInstance needs at least one evaluation point.")
        object.__setattr__(self, "z", z)

    @property
    def n(self) -> int:
        return self.Y.n


def _check_alpha(alpha: Iterable[int], k: int) -> frozenset[int]:
    chosen = frozenset(int(j) for j in alpha)
    if any(j < 0 or j >= k for j in chosen):
        raise ValueError(f"alpha must be a subset of range({k}), got {sorted(chosen)}.")
    return chosen


def all_subsets(k: int) -> list[frozenset[int]]:
    return [frozenset(c) for size in range(k + 1) for c in combinations(range(k), size)]


def mixed_roots(inst: DecoupledInstance, alpha: Iterable[int]) -> np.ndarray:
    chosen = _check_alpha(alpha, inst.partition.k)
    roots = np.array(inst.Y_prime.roots)
    for j in chosen:
        idx = inst.partition.blocks[j]
        roots[idx] = inst.Y.roots[idx]
    return roots


def _reciprocals(z: np.ndarray, roots: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    diff = z[:, None] - roots[None, :]
    pole = np.abs(diff).min(axis=1) < POLE_TOLERANCE * (1.0 + np.abs(z))
    with np.errstate(divide="ignore", invalid="ignore"):
        return 1.0 / diff, pole


def _require_partition(inst: DecoupledInstance, k: int) -> None:
    if inst.partition.k != k:
        raise ValueError(f"Partition has {inst.partition.k} blocks, expected k={k}.")


def sn_alpha(inst: DecoupledInstance, alpha: Iterable[int], k: int) -> np.ndarray:
    """S_n at every point of ``inst.z`` for the mixed configuration; poles give complex infinity."""
    _require_partition(inst, k)
    w, pole = _reciprocals(inst.z, mixed_roots(inst, alpha))
    values = elementary_symmetric(np.where(pole[:, None], 0.0, w), k)[:, k]
    values[pole] = complex(math.inf, 0.0)
    return values


def decoupled_h(inst: DecoupledInstance, k: int) -> np.ndarray:
    """``sum_alpha (-1)^(k - |alpha|) S_n(z; Y^alpha)`` at every point."""
    total = np.zeros(inst.z.size, dtype=np.complex128)
    for alpha in all_subsets(k):
        values = sn_alpha(inst, alpha, k)
        if not np.all(np.isfinite(values)):
            raise PoleError(f"Mixed configuration alpha={sorted(alpha)} has a pole.")
        total += (-1.0) ** (k - len(alpha)) * values
    return total


def block_difference_sums(inst: DecoupledInstance, k: int) -> np.ndarray:
    """``sum_{j in R_i} (1/(z - Y_j) - 1/(z - Y'_j))`` as a ``(k, L)`` array."""
    _require_partition(inst, k)
    w, pole = _reciprocals(inst.z, inst.Y.roots)
    w_prime, pole_prime = _reciprocals(inst.z, inst.Y_prime.roots)
    if pole.any() or pole_prime.any():
        raise PoleError("An evaluation point coincides with a root of Y or Y'.")
    diff = w - w_prime
    return np.stack([diff[:, block].sum(axis=1) for block in inst.partition.blocks])


def product_form(inst: DecoupledInstance, k: int) -> np.ndarray:
    return np.prod(block_difference_sums(inst, k), axis=0)


@dataclass(frozen=True)
class PigeonholeWitness:
    block: int
    indices: tuple[int, ...]
    difference_sums: tuple[float, ...]


def pigeonhole_witness(inst: DecoupledInstance, k: int) -> PigeonholeWitness:
    """A block and at least ``L / k`` points where that block's difference sum is at most 2."""
    for alpha in all_subsets(k):
        values = sn_alpha(inst, alpha, k)
        if not np.all(np.abs(values) <= 1.0):
            raise HypothesisNotSatisfied(f"|S_n| exceeds 1 for alpha={sorted(alpha)}.")
    moduli = np.abs(block_difference_sums(inst, k))
    small = moduli <= PIGEONHOLE_BOUND * (1.0 + 1e-9)
    block = int(np.argmax(small.sum(axis=1)))
    indices = tuple(int(i) for i in np.flatnonzero(small[block]))
    if len(indices) < inst.z.size / k:
        raise RuntimeError("Pigeonhole produced too few indices; block sums are inconsistent.")
    sums = tuple(float(v) for v in moduli[block, list(indices)])
    return PigeonholeWitness(block=block, indices=indices, difference_sums=sums)


def wilson_interval(hits: int, trials: int, confidence: float = 0.95) -> tuple[float, float]:
    ci = binomtest(int(hits), int(trials)).proportion_ci(confidence_level=confidence, method="wilson")
    return float(ci.low), float(ci.high)


@dataclass(frozen=True)
class SmallBallEstimate:
    n: int
    L: int
    trials: int
    hits: int
    p_hat: float
    ci_low: float
    ci_high: float

    @classmethod
    def from_counts(cls, n: int, L: int, trials: int, hits: int) -> "SmallBallEstimate":
        if trials < 1 or not 0 <= hits <= trials:
            raise ValueError(f"Invalid counts: hits={hits}, trials={trials}.")
        p_hat = hits / trials
        low, high = wilson_interval(hits, trials)
        return cls(n=n, L=L, trials=trials, hits=hits, p_hat=p_hat, ci_low=min(low, p_hat), ci_high=max(high, p_hat))


def _check_trials(trials: int) -> None:
    if trials < MIN_TRIALS:
        raise ValueError(f"Need at least {MIN_TRIALS} trials, got {trials}.")


def _check_distinct(points: np.ndarray) -> None:
    if np.unique(points).size != points.size:
        raise ValueError("Evaluation points must be pairwise distinct.")


def exact_event_probability(
    dist: RootDistribution, n: int, event: Callable[[np.ndarray], np.ndarray], chunk: int = 2**15
) -> float:
    """Probability of ``event`` over every configuration of ``n`` i.i.d. atoms."""
    if dist.kind != "discrete":
        raise ValueError("Exhaustive enumeration needs a discrete distribution.")
    atoms = np.asarray(dist.atoms, dtype=np.complex128)
    weights = np.asarray(dist.weights)
    s = atoms.size
    total = s**n
    if total > MAX_ENUMERATION:
        raise ValueError(f"{s}^{n} configurations exceed the enumeration cap {MAX_ENUMERATION}.")
    radix = s ** np.arange(n, dtype=np.int64)
    probability = 0.0
    for start, stop in chunk_ranges(total, chunk):
        digits = (np.arange(start, stop, dtype=np.int64)[:, None] // radix[None, :]) % s
        mass = np.prod(weights[digits], axis=1)
        probability += float(mass[np.asarray(event(atoms[digits]), dtype=bool)].sum())
    return probability


def _ctv_events(
    paired: np.ndarray, n: int, k: int, z: complex, event_radius: float
) -> tuple[np.ndarray, np.ndarray]:
    """Events on ``Y`` and jointly on every ``Y^alpha``; ``paired`` rows are ``Y`` followed by ``Y'``."""
    partition = make_partition(n, k)
    original, copy = paired[:, :n], paired[:, n:]
    joint = np.ones(paired.shape[0], dtype=bool)
    lhs = np.zeros(paired.shape[0], dtype=bool)
    for alpha in all_subsets(k):
        mixed = copy.copy()
        for j in alpha:
            mixed[:, partition.blocks[j]] = original[:, partition.blocks[j]]
        event = np.abs(evaluate_sn_batch(mixed, [z], k)[:, 0]) <= event_radius
        joint &= event
        if len(alpha) == k:
            lhs = event
    return lhs, joint


@dataclass(frozen=True)
class CTVResult:
    k: int
    event_radius: float
    lhs: SmallBallEstimate
    rhs: SmallBallEstimate

    @property
    def exponent(self) -> float:
        return 1.0 / 2**self.k

    @property
    def rhs_root(self) -> float:
        return self.rhs.p_hat**self.exponent

    @property
    def holds(self) -> bool:
        return self.lhs.ci_low <= self.rhs.ci_high**self.exponent


def count_ctv_hits(
    dist: RootDistribution, n: int, k: int, z: complex, event_radius: float, seed: int, start: int, stop: int
) -> tuple[int, int]:
    paired = sample_trials(dist, seed, start, stop, 2 * n)
    lhs, joint = _ctv_events(paired, n, k, z, event_radius)
    return int(lhs.sum()), int(joint.sum())


def ctv_check(
    k: int,
    n: int,
    dist: RootDistribution,
    event_radius: float,
    trials: int,
    seed: int,
    z: complex = 0j,
) -> CTVResult:
    """Monte Carlo estimates of both sides of the decoupling inequality for ``|S_n(z)| <= event_radius``."""
    _check_trials(trials)
    make_partition(n, k)
    lhs_hits = rhs_hits = 0
    for start, stop in chunk_ranges(trials, TRIAL_CHUNK):
        lhs, rhs = count_ctv_hits(dist, n, k, z, event_radius, seed, start, stop)
        lhs_hits += lhs
        rhs_hits += rhs
    return CTVResult(
        k=k,
        event_radius=event_radius,
        lhs=SmallBallEstimate.from_counts(n, 1, trials, lhs_hits),
        rhs=SmallBallEstimate.from_counts(n, 1, trials, rhs_hits),
    )


def exact_ctv(k: int, n: int, dist: RootDistribution, event_radius: float, z: complex = 0j) -> tuple[float, float]:
    """Exact ``(lhs, rhs)`` probabilities by enumerating ``Y`` and ``Y'`` together."""
    lhs = exact_event_probability(dist, 2 * n, lambda c: _ctv_events(c, n, k, z, event_radius)[0])
    rhs = exact_event_probability(dist, 2 * n, lambda c: _ctv_events(c, n, k, z, event_radius)[1])
    return lhs, rhs


@dataclass(frozen=True)
class NondegeneracyResult:
    rank: int
    degenerate: bool
    discarded: int


def nondegeneracy_rank_test(
    dist: RootDistribution,
    z_points: Sequence[complex],
    m: int,
    seed: int,
    force_equal: bool = False,
) -> NondegeneracyResult:
    """Real-affine rank of ``(1/(z_j - Z) - 1/(z_j - Z'))_j`` over ``m`` pole-free pairs."""
    zs = np.asarray(z_points, dtype=np.complex128).reshape(-1)
    _check_distinct(zs)
    if m < 4 * zs.size:
        raise ValueError(f"Need m >= 4L = {4 * zs.size}, got {m}.")
    first = SampleStream(dist, derive_seed(seed, "nondegeneracy", "Z"))
    second = SampleStream(dist, derive_seed(seed, "nondegeneracy", "Z'"))
    tolerance = POLE_TOLERANCE * (1.0 + np.abs(zs))
    size = m
    while True:
        z_draw = sample_prefix(first, size).roots
        z_copy = z_draw if force_equal else sample_prefix(second, size).roots
        clean = (np.abs(zs[None, :] - z_draw[:, None]) >= tolerance).all(axis=1)
        clean &= (np.abs(zs[None, :] - z_copy[:, None]) >= tolerance).all(axis=1)
        if clean.sum() >= m:
            break
        size *= 2
    keep = np.flatnonzero(clean)[:m]
    discarded = int(keep[-1] + 1 - m)
    if discarded:
        logger.info("Discarded %d pole-colliding samples.", discarded)
    vectors = 1.0 / (zs[None, :] - z_draw[keep, None]) - 1.0 / (zs[None, :] - z_copy[keep, None])
    real = np.hstack([vectors.real, vectors.imag])
    centered = real - real.mean(axis=0)
    singular = np.linalg.svd(centered, compute_uv=False)
    top = float(singular.max()) if singular.size else 0.0
    rank = int(np.count_nonzero(singular > RANK_THRESHOLD * top)) if top > 0 else 0
    return NondegeneracyResult(rank=rank, degenerate=rank < 2 * zs.size, discarded=discarded)


def _linear_block(d: int, n: int, step: str, seed: int, block: int) -> np.ndarray:
    rng = philox_generator(derive_seed(seed, "linear", step, d, n), block)
    if step == "rademacher":
        return 2.0 * rng.binomial(n, 0.5, size=(LINEAR_BLOCK, d)) - n
    if step == "gaussian":
        return math.sqrt(n) * rng.standard_normal((LINEAR_BLOCK, d))
    raise ValueError(f"Unknown step distribution {step!r}; expected one of {list(LINEAR_STEPS)}.")


def count_linear_small_ball_hits(
    d: int, n: int, step: str, radius: float, seed: int, start: int, stop: int
) -> int:
    """Hits of ``||X_1 + ... + X_n|| <= radius`` for trials ``start..stop-1``.

    Sums are drawn directly: a Rademacher coordinate sum is ``2 Binom(n, 1/2) - n``
    and a Gaussian one is ``sqrt(n) N(0, 1)``.
    """
    hits = 0
    bound = radius * radius * (1.0 + 1e-12)
    for block in range(start // LINEAR_BLOCK, -(-stop // LINEAR_BLOCK)):
        sums = _linear_block(d, n, step, seed, block)
        lo = max(start - block * LINEAR_BLOCK, 0)
        hi = min(stop - block * LINEAR_BLOCK, LINEAR_BLOCK)
        hits += int(np.count_nonzero((sums[lo:hi] ** 2).sum(axis=1) <= bound))
    return hits


def estimate_linear_small_ball(
    d: int, n: int, step: str, radius: float, trials: int, seed: int
) -> SmallBallEstimate:
    _check_trials(trials)
    if d < 1:
        raise ValueError(f"Dimension must be >= 1, got {d}.")
    hits = count_linear_small_ball_hits(d, n, step, radius, seed, 0, trials)
    return SmallBallEstimate.from_counts(n, d, trials, hits)


def exact_rademacher_small_ball(n: int, radius: float) -> float:
    """``P(|2 Binom(n, 1/2) - n| <= radius)`` for one real coordinate."""
    b = np.arange(n + 1)
    inside = np.abs(2 * b - n) <= radius * (1.0 + 1e-12)
    return float(binom.pmf(b[inside], n, 0.5).sum())


def count_joint_small_ball_hits(
    dist: RootDistribution,
    n: int,
    k: int,
    z_points: np.ndarray,
    seed: int,
    start: int,
    stop: int,
    threshold: float = 1.0,
) -> int:
    """Trials where ``|S_n(z_j)| <= threshold`` for every ``j``; a pole makes the event false."""
    roots = sample_trials(dist, seed, start, stop, n)
    values = evaluate_sn_batch(roots, z_points, k)
    return int(np.count_nonzero(np.all(np.abs(values) <= threshold, axis=1)))


def estimate_joint_small_ball(
    dist: RootDistribution,
    n: int,
    k: int,
    z_points: Sequence[complex],
    trials: int,
    seed: int,
    threshold: float = 1.0,
) -> SmallBallEstimate:
    _check_trials(trials)
    zs = np.asarray(z_points, dtype=np.complex128).reshape(-1)
    _check_distinct(zs)
    hits = sum(
        count_joint_small_ball_hits(dist, n, k, zs, seed, start, stop, threshold)
        for start, stop in chunk_ranges(trials, TRIAL_CHUNK)
    )
    return SmallBallEstimate.from_counts(n, zs.size, trials, hits)


def default_point_count(k: int) -> int:
    return 2 ** (k + 2) * k


def evaluation_points(dist: RootDistribution, L: int, placement: str = "near") -> np.ndarray:
    """``L`` distinct points on a circle at half (near) or three times (far) the distribution's scale."""
    if L < 1:
        raise ValueError(f"L must be >= 1, got {L}.")
    scale = typical_scale(dist)
    if placement == "near":
        radius = 0.5 * scale
    elif placement == "far":
        radius = 3.0 * scale
    else:
        raise ValueError(f"Unknown placement {placement!r}; expected 'near' or 'far'.")
    theta = 2.0 * np.pi * (np.arange(L) + 1.0 / 3.0) / L
    return radius * np.exp(1j * theta)


def fit_decay_exponent(ns: Sequence[int], p_hats: Sequence[float]) -> float:
    """Slope of ``log p`` against ``log n``; ``nan`` when any estimate is zero."""
    ps = np.asarray(p_hats, dtype=float)
    if len(ns) < 2 or np.any(ps <= 0):
        return math.nan
    slope, _ = np.polyfit(np.log(np.asarray(ns, dtype=float)), np.log(ps), 1)
    return float(slope)
