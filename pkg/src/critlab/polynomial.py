"""Evaluation of P_n, log|P_n| and S_n = P_n^(k) / (k! P_n) from root data.

Everything goes through the power sums ``p_j = sum_i (z - Z_i)^(-j)`` and
Newton's identities, so the cost is O(n k) per point and no coefficient
expansion happens outside the small-n oracle in ``rootfinding``.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from itertools import combinations
from typing import Sequence

import numpy as np

logger = logging.getLogger("critlab.polynomial")

POLE_TOLERANCE = 1e-13
DIVISION_FLOOR = 1e-300
_CHUNK_ELEMENTS = 2**21


class PoleError(ValueError):
    """Raised when an evaluation point coincides with a root."""


@dataclass(frozen=True, eq=False)
class RootSet:
    roots: np.ndarray

    def __post_init__(self) -> None:
        roots = np.array(self.roots, dtype=np.complex128).reshape(-1)
        if roots.size < 1:
            raise ValueError("RootSet needs at least one root.")
        if not np.all(np.isfinite(roots)):
            raise ValueError("RootSet roots must be finite.")
        roots.setflags(write=False)
        object.__setattr__(self, "roots", roots)

    @classmethod
    def of(cls, values: Sequence[complex] | np.ndarray) -> "RootSet":
        return cls(np.asarray(values, dtype=np.complex128))

    @property
    def n(self) -> int:
        return int(self.roots.size)

    def __len__(self) -> int:
        return self.n

    def translate(self, shift: complex) -> "RootSet":
        return RootSet(self.roots + shift)

    def centroid(self) -> complex:
        return complex(self.roots.mean())

    def diameter(self) -> float:
        roots = self.roots
        step = max(1, _CHUNK_ELEMENTS // roots.size)
        best = 0.0
        for start in range(0, roots.size, step):
            block = np.abs(roots[start:start + step, None] - roots[None, :])
            best = max(best, float(block.max()))
        return best


@dataclass(frozen=True, eq=False)
class PowerSums:
    z: complex
    p: np.ndarray
    min_distance: float
    is_pole: bool

    @property
    def k(self) -> int:
        return int(self.p.size)


@dataclass(frozen=True)
class SnValue:
    value: complex
    log_abs: float
    is_pole: bool


@dataclass(frozen=True, eq=False)
class SnGrid:
    points: np.ndarray
    values: np.ndarray
    log_abs: np.ndarray
    is_pole: np.ndarray


def _pole_mask(min_distance: np.ndarray, z: np.ndarray) -> np.ndarray:
    return min_distance < POLE_TOLERANCE * (1.0 + np.abs(z))


def _power_sums_block(diff: np.ndarray, order: int) -> tuple[np.ndarray, np.ndarray]:
    """Power sums over the last axis of ``diff = z - Z``; returns ``(p, min_distance)``."""
    min_distance = np.abs(diff).min(axis=-1)
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        w = 1.0 / diff
        p = np.empty(diff.shape[:-1] + (order,), dtype=np.complex128)
        power = w
        for j in range(order):
            p[..., j] = power.sum(axis=-1)
            if j + 1 < order:
                power = power * w
    return p, min_distance


def _newton_elementary(p: np.ndarray) -> np.ndarray:
    k = p.shape[-1]
    e = np.zeros(p.shape[:-1] + (k + 1,), dtype=np.complex128)
    e[..., 0] = 1.0
    for m in range(1, k + 1):
        acc = np.zeros(p.shape[:-1], dtype=np.complex128)
        for j in range(1, m + 1):
            sign = 1.0 if j % 2 == 1 else -1.0
            acc = acc + sign * e[..., m - j] * p[..., j - 1]
        e[..., m] = acc / m
    return e


def _newton_elementary_derivative(p: np.ndarray, e: np.ndarray) -> np.ndarray:
    """d e_m / dz from power sums of order k+1, using d p_j / dz = -j p_{j+1}."""
    k = e.shape[-1] - 1
    dp = np.stack([-(j + 1) * p[..., j + 1] for j in range(k)], axis=-1)
    de = np.zeros_like(e)
    for m in range(1, k + 1):
        acc = np.zeros(p.shape[:-1], dtype=np.complex128)
        for j in range(1, m + 1):
            sign = 1.0 if j % 2 == 1 else -1.0
            acc = acc + sign * (de[..., m - j] * p[..., j - 1] + e[..., m - j] * dp[..., j - 1])
        de[..., m] = acc / m
    return de


def _check_order(r: RootSet, k: int) -> None:
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}.")
    if k > r.n:
        raise ValueError(f"k={k} exceeds the number of roots n={r.n}.")


def _safe_log_abs(values: np.ndarray) -> np.ndarray:
    with np.errstate(divide="ignore"):
        return np.log(np.abs(values))


def power_sums(r: RootSet, z: complex, k: int) -> PowerSums:
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}.")
    z = complex(z)
    p, min_distance = _power_sums_block(z - r.roots, k)
    is_pole = bool(_pole_mask(np.asarray(min_distance), np.asarray(z)))
    if is_pole:
        p = np.full(k, complex(math.inf, 0.0))
    return PowerSums(z=z, p=p, min_distance=float(min_distance), is_pole=is_pole)


def elementary_from_power_sums(p: PowerSums | Sequence[complex] | np.ndarray) -> np.ndarray:
    """Newton's identities: ``m e_m = sum_{j=1..m} (-1)^(j-1) e_{m-j} p_j``; returns ``e_0..e_k``."""
    values = p.p if isinstance(p, PowerSums) else np.asarray(p, dtype=np.complex128)
    if not np.all(np.isfinite(values)):
        raise ValueError("Power sums must be finite.")
    return _newton_elementary(values)


def elementary_symmetric(w: np.ndarray, k: int) -> np.ndarray:
    """``e_0..e_k`` of the last axis of ``w`` by the one-term-at-a-time recurrence."""
    w = np.asarray(w, dtype=np.complex128)
    e = np.zeros(w.shape[:-1] + (k + 1,), dtype=np.complex128)
    e[..., 0] = 1.0
    for i in range(w.shape[-1]):
        wi = w[..., i]
        for m in range(min(i + 1, k), 0, -1):
            e[..., m] = e[..., m] + wi * e[..., m - 1]
    return e


def brute_force_sn(r: RootSet, z: complex, k: int) -> complex:
    """Direct k-subset sum; exponential cost, for cross-checks only."""
    w = 1.0 / (complex(z) - r.roots)
    return complex(sum(np.prod(w[list(idx)]) for idx in combinations(range(r.n), k)))


def evaluate_sn(r: RootSet, z: complex, k: int) -> SnValue:
    _check_order(r, k)
    ps = power_sums(r, z, k)
    if ps.is_pole:
        return SnValue(value=complex(math.nan, math.nan), log_abs=math.inf, is_pole=True)
    value = complex(_newton_elementary(ps.p)[k])
    log_abs = math.log(abs(value)) if value != 0 else -math.inf
    return SnValue(value=value, log_abs=log_abs, is_pole=False)


def _chunks(total: int, per_item: int) -> range:
    return range(0, total, max(1, _CHUNK_ELEMENTS // max(per_item, 1)))


def evaluate_sn_many(r: RootSet, zs: np.ndarray | Sequence[complex], k: int) -> SnGrid:
    _check_order(r, k)
    zs = np.asarray(zs, dtype=np.complex128).reshape(-1)
    values = np.empty(zs.size, dtype=np.complex128)
    min_distance = np.empty(zs.size)
    step = _chunks(zs.size, r.n).step
    for start in range(0, zs.size, step):
        block = zs[start:start + step]
        p, dist = _power_sums_block(block[:, None] - r.roots[None, :], k)
        values[start:start + step] = _newton_elementary(p)[:, k]
        min_distance[start:start + step] = dist
    is_pole = _pole_mask(min_distance, zs)
    values[is_pole] = complex(math.nan, math.nan)
    log_abs = _safe_log_abs(values)
    log_abs[is_pole] = math.inf
    return SnGrid(points=zs, values=values, log_abs=log_abs, is_pole=is_pole)


def evaluate_sn_batch(roots: np.ndarray, zs: np.ndarray | Sequence[complex], k: int) -> np.ndarray:
    """S_n for a stack of root sets ``(T, n)`` at points ``(L,)``; poles map to complex infinity."""
    roots = np.asarray(roots, dtype=np.complex128)
    zs = np.asarray(zs, dtype=np.complex128).reshape(-1)
    trials, n = roots.shape
    if not 1 <= k <= n:
        raise ValueError(f"k must satisfy 1 <= k <= n={n}, got {k}.")
    out = np.empty((trials, zs.size), dtype=np.complex128)
    step = _chunks(trials, zs.size * n).step
    for start in range(0, trials, step):
        block = roots[start:start + step]
        diff = zs[None, :, None] - block[:, None, :]
        p, dist = _power_sums_block(diff, k)
        values = _newton_elementary(p)[..., k]
        values[_pole_mask(dist, np.broadcast_to(zs, dist.shape))] = complex(math.inf, 0.0)
        out[start:start + step] = values
    return out


def newton_parts(roots: np.ndarray, zs: np.ndarray, k: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Return ``(S_n, S_n' + S_n p_1, min_distance)`` at each point.

    The ratio of the first two is ``P^(k) / P^(k)'``.
    """
    roots = np.asarray(roots, dtype=np.complex128)
    zs = np.asarray(zs, dtype=np.complex128).reshape(-1)
    p, min_distance = _power_sums_block(zs[:, None] - roots[None, :], k + 1)
    with np.errstate(invalid="ignore", over="ignore"):
        e = _newton_elementary(p[:, :k])
        de = _newton_elementary_derivative(p, e)
        value = e[:, k]
        derivative = de[:, k] + value * p[:, 0]
    return value, derivative, min_distance


def sn_log_derivative(r: RootSet, z: complex, k: int) -> complex:
    """S_n'(z) / S_n(z) by differentiating the Newton recurrence."""
    _check_order(r, k)
    z = complex(z)
    p, min_distance = _power_sums_block(z - r.roots, k + 1)
    if _pole_mask(np.asarray(min_distance), np.asarray(z)):
        raise PoleError(f"z={z!r} coincides with a root.")
    e = _newton_elementary(p[:k])
    de = _newton_elementary_derivative(p, e)
    if abs(e[k]) < DIVISION_FLOOR:
        raise ZeroDivisionError(f"|S_n(z)| below {DIVISION_FLOOR:g} at z={z!r}.")
    return complex(de[k] / e[k])


def pk_newton_ratio(r: RootSet, z: complex, k: int) -> complex:
    """Newton step ``P^(k)(z) / P^(k)'(z)`` computed as ``S_n / (S_n' + S_n p_1)``."""
    _check_order(r, k)
    value, derivative, min_distance = newton_parts(r.roots, np.asarray([z]), k)
    if _pole_mask(min_distance, np.asarray([complex(z)]))[0]:
        raise PoleError(f"z={z!r} coincides with a root.")
    if abs(derivative[0]) < DIVISION_FLOOR:
        raise ZeroDivisionError(f"P^(k)' underflows at z={z!r}.")
    return complex(value[0] / derivative[0])


def log_abs_p(r: RootSet, z: complex) -> float:
    with np.errstate(divide="ignore"):
        return float(np.sum(np.log(np.abs(complex(z) - r.roots))))
