"""Seeded, prefix-consistent sampling of i.i.d. roots.

Every stream is keyed by a 64-bit seed. Values are produced in fixed-size
blocks, each block drawn from a Philox generator whose key comes from the
seed and whose counter is the block index, so element ``i`` depends only on
``(seed, distribution, i)``.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Any, Mapping, Sequence

import numpy as np

from .polynomial import RootSet
from .utils import stable_hash

logger = logging.getLogger("critlab.sampling")

DISTRIBUTION_KINDS = (
    "uniform-disk",
    "uniform-circle",
    "complex-gaussian",
    "discrete",
    "mixture",
)
BLOCK_SIZE = 256
WEIGHT_TOLERANCE = 1e-12
_SEED_MASK = (1 << 64) - 1


@dataclass(frozen=True)
class RootDistribution:
    kind: str
    radius: float | None = None
    scale: float | None = None
    atoms: tuple[complex, ...] = ()
    weights: tuple[float, ...] = ()
    components: tuple["RootDistribution", ...] = ()

    def __post_init__(self) -> None:
        if self.kind not in DISTRIBUTION_KINDS:
            raise ValueError(
                f"Unknown distribution kind {self.kind!r}; expected one of {list(DISTRIBUTION_KINDS)}."
            )
        if self.kind in ("uniform-disk", "uniform-circle"):
            if self.radius is None or not self.radius > 0:
                raise ValueError(f"{self.kind} needs a strictly positive radius, got {self.radius!r}.")
        if self.kind == "complex-gaussian":
            if self.scale is None or not self.scale > 0:
                raise ValueError(f"complex-gaussian needs a strictly positive scale, got {self.scale!r}.")
        if self.kind == "discrete":
            if not self.atoms:
                raise ValueError("discrete distribution needs at least one atom.")
            if len(set(self.atoms)) != len(self.atoms):
                raise ValueError("discrete atoms must be pairwise distinct.")
            _check_weights(self.weights, len(self.atoms))
        if self.kind == "mixture":
            if not self.components:
                raise ValueError("mixture needs at least one component.")
            _check_weights(self.weights, len(self.components))

    @classmethod
    def uniform_disk(cls, radius: float = 1.0) -> "RootDistribution":
        return cls("uniform-disk", radius=float(radius))

    @classmethod
    def uniform_circle(cls, radius: float = 1.0) -> "RootDistribution":
        return cls("uniform-circle", radius=float(radius))

    @classmethod
    def complex_gaussian(cls, scale: float = 1.0) -> "RootDistribution":
        return cls("complex-gaussian", scale=float(scale))

    @classmethod
    def discrete(
        cls, atoms: Sequence[complex], weights: Sequence[float] | None = None
    ) -> "RootDistribution":
        atoms_t = tuple(complex(a) for a in atoms)
        if weights is None:
            weights = [1.0 / len(atoms_t)] * len(atoms_t) if atoms_t else []
        return cls("discrete", atoms=atoms_t, weights=tuple(float(w) for w in weights))

    @classmethod
    def mixture(
        cls, components: Sequence["RootDistribution"], weights: Sequence[float] | None = None
    ) -> "RootDistribution":
        comps = tuple(components)
        if weights is None:
            weights = [1.0 / len(comps)] * len(comps) if comps else []
        return cls("mixture", components=comps, weights=tuple(float(w) for w in weights))

    def to_dict(self) -> dict[str, Any]:
        if self.kind in ("uniform-disk", "uniform-circle"):
            return {"kind": self.kind, "radius": self.radius}
        if self.kind == "complex-gaussian":
            return {"kind": self.kind, "scale": self.scale}
        if self.kind == "discrete":
            return {
                "kind": self.kind,
                "atoms": [[a.real, a.imag] for a in self.atoms],
                "weights": list(self.weights),
            }
        return {
            "kind": self.kind,
            "components": [c.to_dict() for c in self.components],
            "weights": list(self.weights),
        }


def _check_weights(weights: Sequence[float], expected: int) -> None:
    if len(weights) != expected:
        raise ValueError(f"Expected {expected} weights, got {len(weights)}.")
    if any(w < 0 for w in weights):
        raise ValueError(f"Weights must be nonnegative, got {list(weights)}.")
    if abs(math.fsum(weights) - 1.0) > WEIGHT_TOLERANCE:
        raise ValueError(f"Weights must sum to 1, got {math.fsum(weights)!r}.")


def _parse_complex(value: Any) -> complex:
    if isinstance(value, (list, tuple)):
        if len(value) != 2:
            raise ValueError(f"Complex pair must have two entries, got {value!r}.")
        return complex(float(value[0]), float(value[1]))
    if isinstance(value, str):
        return complex(value.replace(" ", "").replace("i", "j"))
    return complex(value)


def parse_distribution(data: Mapping[str, Any]) -> RootDistribution:
    """Build a distribution from a config descriptor.

    Atoms may be numbers, strings such as ``"1-2j"`` or ``[re, im]`` pairs.
    """
    if not isinstance(data, Mapping):
        raise ValueError("distribution must be a mapping with a 'kind' key.")
    kind = data.get("kind")
    if kind is None:
        raise ValueError("distribution is missing 'kind'.")
    allowed = {"kind", "radius", "scale", "atoms", "weights", "components"}
    unknown = set(data).difference(allowed)
    if unknown:
        raise ValueError(f"Unknown distribution keys: {sorted(unknown)}")
    if kind in ("uniform-disk", "uniform-circle"):
        return RootDistribution(str(kind), radius=float(data.get("radius", 1.0)))
    if kind == "complex-gaussian":
        return RootDistribution.complex_gaussian(float(data.get("scale", 1.0)))
    if kind == "discrete":
        atoms = [_parse_complex(a) for a in data.get("atoms") or []]
        weights = data.get("weights")
        return RootDistribution.discrete(atoms, None if weights is None else [float(w) for w in weights])
    if kind == "mixture":
        components = [parse_distribution(c) for c in data.get("components") or []]
        weights = data.get("weights")
        return RootDistribution.mixture(components, None if weights is None else [float(w) for w in weights])
    raise ValueError(
        f"Unknown distribution kind {kind!r}; expected one of {list(DISTRIBUTION_KINDS)}."
    )


def has_finite_support(dist: RootDistribution) -> bool:
    if dist.kind == "discrete":
        return True
    if dist.kind == "mixture":
        return all(has_finite_support(c) for c in dist.components)
    return False


def support_radius(dist: RootDistribution) -> float:
    """Largest modulus in the support (``inf`` for gaussians)."""
    if dist.kind in ("uniform-disk", "uniform-circle"):
        return float(dist.radius)  # type: ignore[arg-type]
    if dist.kind == "complex-gaussian":
        return math.inf
    if dist.kind == "discrete":
        return max(abs(a) for a in dist.atoms)
    return max(support_radius(c) for c in dist.components)


def typical_scale(dist: RootDistribution) -> float:
    """A finite length scale of the distribution, used to place evaluation points."""
    if dist.kind == "complex-gaussian":
        return float(dist.scale)  # type: ignore[arg-type]
    if dist.kind == "mixture":
        return max(typical_scale(c) for c in dist.components)
    return max(support_radius(dist), 1e-3)


def _tag_to_int(tag: int | str) -> int:
    if isinstance(tag, str):
        return int(stable_hash(tag)[:16], 16)
    return int(tag) & _SEED_MASK


def derive_seed(seed: int, *tags: int | str) -> int:
    """Deterministic, independent child seed for ``(seed, *tags)``."""
    entropy = [int(seed) & _SEED_MASK] + [_tag_to_int(t) for t in tags]
    state = np.random.SeedSequence(entropy).generate_state(1, dtype=np.uint64)
    return int(state[0])


def philox_generator(seed: int, counter: int = 0) -> np.random.Generator:
    """Counter-based generator: the key comes from ``seed``, ``counter`` selects a disjoint block."""
    key = np.random.SeedSequence(int(seed) & _SEED_MASK).generate_state(2, dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key, counter=[0, 0, 0, int(counter)]))


def _draw(dist: RootDistribution, rng: np.random.Generator, size: int) -> np.ndarray:
    if dist.kind == "uniform-disk":
        u = rng.random(size)
        theta = 2.0 * np.pi * rng.random(size)
        return dist.radius * np.sqrt(u) * np.exp(1j * theta)
    if dist.kind == "uniform-circle":
        theta = 2.0 * np.pi * rng.random(size)
        return dist.radius * np.exp(1j * theta)
    if dist.kind == "complex-gaussian":
        return dist.scale * (rng.standard_normal(size) + 1j * rng.standard_normal(size)) / math.sqrt(2.0)
    if dist.kind == "discrete":
        atoms = np.asarray(dist.atoms, dtype=np.complex128)
        return atoms[rng.choice(len(atoms), size=size, p=np.asarray(dist.weights))]
    choice = rng.choice(len(dist.components), size=size, p=np.asarray(dist.weights))
    draws = np.stack([_draw(c, rng, size) for c in dist.components])
    return draws[choice, np.arange(size)]


@dataclass(frozen=True)
class SampleStream:
    distribution: RootDistribution
    seed: int
    block_size: int = field(default=BLOCK_SIZE)

    def __post_init__(self) -> None:
        if not 0 <= int(self.seed) <= _SEED_MASK:
            raise ValueError(f"Seed must be a 64-bit unsigned integer, got {self.seed!r}.")

    @cached_property
    def _key_seed(self) -> int:
        return derive_seed(self.seed, "roots")

    def block(self, index: int) -> np.ndarray:
        rng = philox_generator(self._key_seed, index)
        return _draw(self.distribution, rng, self.block_size)


def sample_prefix(stream: SampleStream, n: int) -> RootSet:
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}.")
    blocks = -(-n // stream.block_size)
    values = np.concatenate([stream.block(b) for b in range(blocks)])[:n]
    return RootSet(values)


def trial_stream(dist: RootDistribution, seed: int, index: int) -> SampleStream:
    """Stream for Monte Carlo trial ``index``; independent of scheduling."""
    return SampleStream(dist, derive_seed(seed, "trial", index))


def sample_trials(
    dist: RootDistribution, seed: int, start: int, stop: int, n: int
) -> np.ndarray:
    """Roots of trials ``start..stop-1`` stacked as a ``(stop - start, n)`` array."""
    return np.stack([sample_prefix(trial_stream(dist, seed, t), n).roots for t in range(start, stop)])
